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

#ifndef DPFERMI_PRIVACY_H_
#define DPFERMI_PRIVACY_H_

#include <cstdint>
#include <string_view>

#include <Eigen/Dense>

#include "dpfermi/classifier.h"
#include "dpfermi/dataset.h"
#include "dpfermi/random.h"

namespace dpfermi {

// (epsilon, delta) with the precondition epsilon <= 2 ln(1/delta) required by
// the closed-form calibration.
struct PrivacyBudget {
  double epsilon = 1.0;
  double delta = 1e-5;

  // Throws kCalibration if the budget is out of range.
  void Validate() const;
};

// Variances of the Gaussian noise added to the theta and W updates.
struct NoiseScales {
  double sigma_theta_sq = 0.0;
  double sigma_w_sq = 0.0;

  bool enabled() const { return sigma_theta_sq > 0.0 || sigma_w_sq > 0.0; }
};

// l2 sensitivities of the batch-averaged psi gradients.
struct SensitivityBounds {
  double delta_theta = 0.0;
  double delta_w = 0.0;
};

enum class PrivacyGranularity { kSensitiveOnly, kAllFeatures, kNone };

std::string_view GranularityName(PrivacyGranularity g);  // sensitive/all/none
PrivacyGranularity ParseGranularity(std::string_view name);

// Least noise making the DP-FERMI iterates (epsilon, delta)-DP with respect
// to the sensitive attributes, for datasets with a rho fraction of every
// group, a model whose probabilities are lipschitz_theta-Lipschitz in theta,
// and duals bounded entrywise by box_radius:
//   sigma_w^2     = 16 T ln(1/delta) / (eps^2 n^2 rho)
//   sigma_theta^2 = 16 L^2 D^2 T ln(1/delta) / (eps^2 n^2 rho)
NoiseScales CalibrateSensitiveOnly(const PrivacyBudget& budget,
                                   int64_t iterations, int64_t n, double rho,
                                   double lipschitz_theta, double box_radius);

// Same, for privacy of every feature of a record:
//   sigma_w^2     = 32 T ln(1/delta) / (eps^2 n^2) (1/rho + D^2)
//   sigma_theta^2 = 64 L^2 D^2 T ln(1/delta) / (eps^2 n^2 rho)
//                   + 32 D^4 L^2 l^2 T ln(1/delta) / (eps^2 n^2)
NoiseScales CalibrateAllFeatures(const PrivacyBudget& budget,
                                 int64_t iterations, int64_t n, double rho,
                                 double lipschitz_theta, double box_radius,
                                 int num_labels);

// Dispatches on `granularity`; kNone yields zero noise.
NoiseScales Calibrate(PrivacyGranularity granularity,
                      const PrivacyBudget& budget, int64_t iterations,
                      int64_t n, double rho, double lipschitz_theta,
                      double box_radius, int num_labels);

// Smallest T with T >= (n sqrt(eps) / (2m))^2.
int64_t MinIterations(int64_t n, int64_t m, double epsilon);

// Delta_theta = sqrt(8 D^2 L^2 / (m^2 rho)), Delta_w = sqrt(8 / (m^2 rho)).
SensitivityBounds ComputeSensitivityBounds(double box_radius,
                                           double lipschitz_theta, int64_t m,
                                           double rho);

// Bounds that hold for every (theta, W) in the box when lipschitz_theta bounds
// the operator norm of the Jacobian of F:
//   Delta_theta = 4 D L sqrt(l / rho) / m,  Delta_w = sqrt(8 / (m^2 rho)).
// The flipped sample changes the psi coefficient vector g by at most
// 2 D sqrt(l) (1/sqrt(p_s) + 1/sqrt(p_s')) in l2. Delta_theta exceeds the
// ComputeSensitivityBounds value by sqrt(2 l) and is attained for l = 2,
// rho = 1/2, F = (1/2, 1/2) and W rows of opposite sign patterns.
SensitivityBounds WorstCaseSensitivityBounds(double box_radius,
                                             double lipschitz_theta, int64_t m,
                                             double rho, int num_labels);

// l2 distance between the batch-averaged psi gradients of `ds` and
// `adjacent` over the same batch. Both sides use `stats`.
SensitivityBounds AdjacentGradientDifference(const ModelParams& theta,
                                             const Eigen::MatrixXd& w,
                                             const TabularDataset& ds,
                                             const TabularDataset& adjacent,
                                             std::span<const int> batch,
                                             const SensitiveStats& stats);

// As above with separate P_S for each side.
SensitivityBounds AdjacentGradientDifference(
    const ModelParams& theta, const Eigen::MatrixXd& w,
    const TabularDataset& ds, const SensitiveStats& stats,
    const TabularDataset& adjacent, const SensitiveStats& adjacent_stats,
    std::span<const int> batch);

struct AuditOptions {
  int batch_size = 10;
  int trials = 1000;
  // Use the original dataset's P_S for both sides. When false, the adjacent
  // side recomputes P_S from its own attributes.
  bool hold_stats_fixed = true;
};

struct AuditResult {
  SensitivityBounds max_observed;
  int trials_run = 0;
  int flips_skipped = 0;
};

// Draws `trials` (batch, index in batch, new group) triples, flips the
// sensitive attribute and records the largest gradient differences. Batches
// are sampled without replacement so a record appears at most once. Flips
// that would empty a group are skipped.
AuditResult EmpiricalSensitivityAudit(const ModelParams& theta,
                                      const Eigen::MatrixXd& w,
                                      const TabularDataset& ds,
                                      const AuditOptions& options, Rng& rng);

// i.i.d. N(0, sigma_sq) entries. sigma_sq == 0 returns zeros without touching
// the stream. Throws kInvalidArgument for negative variance.
Eigen::VectorXd GaussianNoise(Rng& rng, double sigma_sq, int dim);

}  // namespace dpfermi

#endif  // DPFERMI_PRIVACY_H_
