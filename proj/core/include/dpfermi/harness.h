//
// Copyright 2026 The dpfermi Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef DPFERMI_HARNESS_H_
#define DPFERMI_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dpfermi/classifier.h"
#include "dpfermi/dataset.h"
#include "dpfermi/fairness.h"
#include "dpfermi/optimizer.h"
#include "dpfermi/privacy.h"

namespace dpfermi {

// Synthetic tabular data with a tunable dependence between labels and the
// sensitive attribute.
//
//   s ~ Uniform{0..k-1},  y0 ~ Uniform{0..l-1}
//   y = s mod l with probability flip_scale * bias, otherwise y0
//   x[0..l)     = separation * e_{y0} + feature_noise * N(0, I)
//   x[l..l+k)   = e_s + feature_noise * N(0, I)   (group proxy, if d_x allows)
//   x[l+k..d_x) = N(0, I)
//
// Features are class-conditional Gaussians of the clean label y0 and the
// observed label is flipped towards the group's class. bias = 0 makes y
// independent of s.
struct SyntheticSpec {
  int n = 2000;
  int d_x = 5;
  int k = 2;
  int l = 2;
  double bias = 0.0;
  double feature_noise = 0.5;
  double separation = 2.0;
  double flip_scale = 0.8;
  uint64_t seed = 0;

  // n >= 1, d_x >= l, k >= 2, l >= 2, bias in [0, 1], noise >= 0,
  // flip_scale in [0, 1].
  void Validate() const;
};

// Deterministic given spec.seed. Throws kInvalidArgument on an invalid spec.
TabularDataset SynthDataset(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Single runs.

struct RunSettings {
  FermiConfig fermi;
  PrivacyBudget budget;
  PrivacyGranularity granularity = PrivacyGranularity::kSensitiveOnly;
  // Step sizes, batch size, box radius, clip, iterate rule and seed. The
  // iteration count is derived from `epochs`.
  SgdaConfig sgda;
  int64_t epochs = 200;
  // Lipschitz constant of F in theta; defaults to SoftmaxLipschitzBound of
  // the training features.
  std::optional<double> lipschitz_theta;
  NoisePlacement noise_placement = NoisePlacement::kInsideLambda;
};

// The fully resolved configuration of one training run.
struct PreparedRun {
  SgdaConfig sgda;  // batch size clamped to n, iterations = epochs ceil(n/m)
  NoiseScales noise;
  double rho = 0.0;
  double lipschitz_theta = 0.0;
};

// Resolves m, T and the calibrated noise for `train`. Throws kCalibration if
// privacy is on and T < MinIterations(n, m, epsilon).
PreparedRun PrepareRun(const TabularDataset& train,
                       const RunSettings& settings);

struct Metrics {
  double error = 0.0;
  double dp_violation = 0.0;  // NaN when a group is absent
  double eo_violation = 0.0;  // NaN when a conditioning cell is empty
  double ermi_hard = 0.0;     // NaN when a group is absent
};

// Hard-prediction metrics of `model` on `ds`.
Metrics Evaluate(const ModelParams& model, const TabularDataset& ds);

// ---------------------------------------------------------------------------
// Sweeps.

struct CsvSource {
  std::filesystem::path path;
  CsvSchema schema;
};

struct ExperimentConfig {
  std::string dataset_id = "synthetic";
  std::variant<SyntheticSpec, CsvSource> source = SyntheticSpec{};
  double test_fraction = 0.2;
  FairnessNotion notion = FairnessNotion::kDemographicParity;
  std::vector<double> lambdas = {0.0};
  std::vector<double> epsilons = {1.0};
  double delta = 1e-5;
  int trials = 1;
  // Template for every cell. fermi.lambda, budget.epsilon and sgda.seed are
  // overwritten per cell.
  RunSettings run;
  uint64_t master_seed = 0;
  // Worker threads; 1 runs the cells in order on the calling thread.
  int threads = 1;

  // lambdas >= 0, epsilons > 0, trials >= 1, both grids nonempty.
  void Validate() const;
};

struct TradeoffRecord {
  std::string dataset_id;
  uint64_t seed = 0;
  double epsilon = 0.0;
  double delta = 0.0;
  double lambda = 0.0;
  FairnessNotion notion = FairnessNotion::kDemographicParity;
  int64_t iterations = 0;
  int64_t batch_size = 0;
  double sigma_theta_sq = 0.0;
  double sigma_w_sq = 0.0;
  double train_error = 0.0;
  double test_error = 0.0;
  double dp_violation = 0.0;
  double eo_violation = 0.0;
  double ermi_hard = 0.0;
  std::string status = "ok";  // "ok" or "diverged@<iteration>"
};

// Trial t uses the dataset from trial seed DeriveSeed(master, {0, t}) (the
// synthetic seed is derived from spec.seed and t instead) and trains cell
// (i, j, t) with DeriveSeed(master, {1, i, j, t}) for epsilon index i and
// lambda index j. Records are ordered by epsilon, then lambda, then trial,
// whatever the thread count. A diverged cell is recorded with status
// "diverged@T" and NaN metrics; any other error aborts the sweep.
std::vector<TradeoffRecord> RunSweep(const ExperimentConfig& config);

// Mean and sample standard deviation of one numeric column over a group.
struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
  int count = 0;  // finite values contributing
};

struct AggregateRecord {
  std::string dataset_id;
  FairnessNotion notion = FairnessNotion::kDemographicParity;
  double epsilon = 0.0;
  double delta = 0.0;
  double lambda = 0.0;
  int runs = 0;
  int diverged = 0;
  Summary iterations, batch_size, sigma_theta_sq, sigma_w_sq, train_error,
      test_error, dp_violation, eo_violation, ermi_hard;
};

// Groups by (dataset_id, notion, epsilon, delta, lambda) in first-appearance
// order. Each column summary skips non-finite values; a single value has
// stddev 0. Throws kInvalidArgument on empty input.
std::vector<AggregateRecord> Aggregate(std::span<const TradeoffRecord> records);

// CSV output with the columns in declaration order and reals printed with 6
// significant digits. Throws kIo if the file cannot be written.
void WriteRecordsCsv(std::span<const TradeoffRecord> records,
                     const std::filesystem::path& path);
void WriteAggregatesCsv(std::span<const AggregateRecord> aggregates,
                        const std::filesystem::path& path);
std::string RecordsCsv(std::span<const TradeoffRecord> records);
std::string AggregatesCsv(std::span<const AggregateRecord> aggregates);

// Parses a file written by WriteRecordsCsv.
std::vector<TradeoffRecord> ReadRecordsCsv(const std::filesystem::path& path);

// Spearman rank correlation with average ranks for ties. Throws
// kInvalidArgument on length mismatch, fewer than two points, or a constant
// input.
double SpearmanCorrelation(std::span<const double> x,
                           std::span<const double> y);

}  // namespace dpfermi

#endif  // DPFERMI_HARNESS_H_
