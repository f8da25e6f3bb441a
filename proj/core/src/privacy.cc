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

#include "dpfermi/privacy.h"

#include <cmath>
#include <string>

#include "dpfermi/error.h"
#include "dpfermi/fairness.h"

namespace dpfermi {
namespace {

void CheckCalibrationInputs(const PrivacyBudget& budget, int64_t iterations,
                            int64_t n, double rho, double lipschitz_theta,
                            double box_radius) {
  budget.Validate();
  if (iterations < 1 || n < 1) {
    throw Error(ErrorCode::kCalibration, "iterations and n must be positive");
  }
  if (!(rho > 0.0 && rho <= 1.0)) {
    throw Error(ErrorCode::kCalibration, "rho must lie in (0, 1]");
  }
  if (!(lipschitz_theta >= 0.0) || !(box_radius >= 0.0)) {
    throw Error(ErrorCode::kCalibration,
                "Lipschitz constant and box radius must be nonnegative");
  }
}

// T ln(1/delta) / (eps^2 n^2), the factor shared by every formula.
double BaseFactor(const PrivacyBudget& budget, int64_t iterations, int64_t n) {
  const double nn = static_cast<double>(n);
  return static_cast<double>(iterations) * std::log(1.0 / budget.delta) /
         (budget.epsilon * budget.epsilon * nn * nn);
}

}  // namespace

void PrivacyBudget::Validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::kCalibration, "epsilon must be positive");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw Error(ErrorCode::kCalibration, "delta must lie in (0, 1)");
  }
  if (epsilon > 2.0 * std::log(1.0 / delta)) {
    throw Error(ErrorCode::kCalibration,
                "epsilon exceeds 2 ln(1/delta) = " +
                    std::to_string(2.0 * std::log(1.0 / delta)));
  }
}

std::string_view GranularityName(PrivacyGranularity g) {
  switch (g) {
    case PrivacyGranularity::kSensitiveOnly:
      return "sensitive";
    case PrivacyGranularity::kAllFeatures:
      return "all";
    case PrivacyGranularity::kNone:
      return "none";
  }
  return "none";
}

PrivacyGranularity ParseGranularity(std::string_view name) {
  if (name == "sensitive" || name == "sensitive_only") {
    return PrivacyGranularity::kSensitiveOnly;
  }
  if (name == "all" || name == "all_features") {
    return PrivacyGranularity::kAllFeatures;
  }
  if (name == "none") return PrivacyGranularity::kNone;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown privacy granularity '" + std::string(name) + "'");
}

NoiseScales CalibrateSensitiveOnly(const PrivacyBudget& budget,
                                   int64_t iterations, int64_t n, double rho,
                                   double lipschitz_theta, double box_radius) {
  CheckCalibrationInputs(budget, iterations, n, rho, lipschitz_theta,
                         box_radius);
  const double base = BaseFactor(budget, iterations, n);
  const double ld = lipschitz_theta * box_radius;
  return NoiseScales{16.0 * ld * ld * base / rho, 16.0 * base / rho};
}

NoiseScales CalibrateAllFeatures(const PrivacyBudget& budget,
                                 int64_t iterations, int64_t n, double rho,
                                 double lipschitz_theta, double box_radius,
                                 int num_labels) {
  CheckCalibrationInputs(budget, iterations, n, rho, lipschitz_theta,
                         box_radius);
  if (num_labels < 1) {
    throw Error(ErrorCode::kCalibration, "number of labels must be positive");
  }
  const double base = BaseFactor(budget, iterations, n);
  const double l2 = lipschitz_theta * lipschitz_theta;
  const double d2 = box_radius * box_radius;
  const double labels_sq = static_cast<double>(num_labels) * num_labels;
  return NoiseScales{
      64.0 * l2 * d2 * base / rho + 32.0 * d2 * d2 * l2 * labels_sq * base,
      32.0 * base * (1.0 / rho + d2)};
}

NoiseScales Calibrate(PrivacyGranularity granularity,
                      const PrivacyBudget& budget, int64_t iterations,
                      int64_t n, double rho, double lipschitz_theta,
                      double box_radius, int num_labels) {
  switch (granularity) {
    case PrivacyGranularity::kSensitiveOnly:
      return CalibrateSensitiveOnly(budget, iterations, n, rho,
                                    lipschitz_theta, box_radius);
    case PrivacyGranularity::kAllFeatures:
      return CalibrateAllFeatures(budget, iterations, n, rho, lipschitz_theta,
                                  box_radius, num_labels);
    case PrivacyGranularity::kNone:
      return NoiseScales{};
  }
  return NoiseScales{};
}

int64_t MinIterations(int64_t n, int64_t m, double epsilon) {
  if (n < 1 || m < 1 || !(epsilon > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "n, m and epsilon must be positive");
  }
  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  const double bound = nn * nn * epsilon / (4.0 * mm * mm);
  // Relative slack so that exact integers are not bumped by rounding noise.
  return static_cast<int64_t>(std::ceil(bound * (1.0 - 1e-12)));
}

SensitivityBounds ComputeSensitivityBounds(double box_radius,
                                           double lipschitz_theta, int64_t m,
                                           double rho) {
  if (!(box_radius > 0.0) || !(lipschitz_theta > 0.0) || m < 1 ||
      !(rho > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "sensitivity inputs must be positive");
  }
  const double mm = static_cast<double>(m);
  return SensitivityBounds{
      std::sqrt(8.0 * box_radius * box_radius * lipschitz_theta *
                lipschitz_theta / (mm * mm * rho)),
      std::sqrt(8.0 / (mm * mm * rho))};
}

SensitivityBounds WorstCaseSensitivityBounds(double box_radius,
                                             double lipschitz_theta, int64_t m,
                                             double rho, int num_labels) {
  if (num_labels < 1) {
    throw Error(ErrorCode::kInvalidArgument, "num_labels must be positive");
  }
  SensitivityBounds b =
      ComputeSensitivityBounds(box_radius, lipschitz_theta, m, rho);
  b.delta_theta = 4.0 * box_radius * lipschitz_theta *
                  std::sqrt(static_cast<double>(num_labels) / rho) /
                  static_cast<double>(m);
  return b;
}

SensitivityBounds AdjacentGradientDifference(const ModelParams& theta,
                                             const Eigen::MatrixXd& w,
                                             const TabularDataset& ds,
                                             const TabularDataset& adjacent,
                                             std::span<const int> batch,
                                             const SensitiveStats& stats) {
  return AdjacentGradientDifference(theta, w, ds, stats, adjacent, stats, batch);
}

SensitivityBounds AdjacentGradientDifference(
    const ModelParams& theta, const Eigen::MatrixXd& w,
    const TabularDataset& ds, const SensitiveStats& stats,
    const TabularDataset& adjacent, const SensitiveStats& adjacent_stats,
    std::span<const int> batch) {
  const Eigen::VectorXd dtheta =
      BatchPsiGradTheta(theta, w, ds, batch, stats) -
      BatchPsiGradTheta(theta, w, adjacent, batch, adjacent_stats);
  const Eigen::MatrixXd dw = BatchPsiGradW(theta, w, ds, batch, stats) -
                             BatchPsiGradW(theta, w, adjacent, batch,
                                           adjacent_stats);
  return SensitivityBounds{dtheta.norm(), dw.norm()};
}

AuditResult EmpiricalSensitivityAudit(const ModelParams& theta,
                                      const Eigen::MatrixXd& w,
                                      const TabularDataset& ds,
                                      const AuditOptions& options, Rng& rng) {
  if (options.trials < 0) {
    throw Error(ErrorCode::kInvalidArgument, "trials must be nonnegative");
  }
  const SensitiveStats stats = ComputeSensitiveStats(ds);
  const std::vector<int64_t>& counts = stats.counts;
  const int k = ds.num_groups();

  AuditResult result;
  for (int t = 0; t < options.trials; ++t) {
    const std::vector<int> batch =
        MinibatchWithoutReplacement(ds.size(), options.batch_size, rng);
    std::uniform_int_distribution<int> pick_member(0, options.batch_size - 1);
    const int i = batch[pick_member(rng)];
    std::uniform_int_distribution<int> pick_group(0, k - 2);
    int new_group = pick_group(rng);
    if (new_group >= ds.group(i)) ++new_group;
    if (counts[ds.group(i)] <= 1) {
      ++result.flips_skipped;
      continue;
    }
    const TabularDataset adjacent = AdjacentSensitive(ds, i, new_group);
    const SensitiveStats adjacent_stats =
        options.hold_stats_fixed ? stats : ComputeSensitiveStats(adjacent);
    const SensitivityBounds diff = AdjacentGradientDifference(
        theta, w, ds, stats, adjacent, adjacent_stats, batch);
    result.max_observed.delta_theta =
        std::max(result.max_observed.delta_theta, diff.delta_theta);
    result.max_observed.delta_w =
        std::max(result.max_observed.delta_w, diff.delta_w);
    ++result.trials_run;
  }
  return result;
}

Eigen::VectorXd GaussianNoise(Rng& rng, double sigma_sq, int dim) {
  if (!(sigma_sq >= 0.0) || !std::isfinite(sigma_sq)) {
    throw Error(ErrorCode::kInvalidArgument,
                "noise variance must be finite and nonnegative");
  }
  if (dim < 0) throw Error(ErrorCode::kInvalidArgument, "negative dimension");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
  if (sigma_sq == 0.0) return out;
  std::normal_distribution<double> normal(0.0, std::sqrt(sigma_sq));
  for (int i = 0; i < dim; ++i) out[i] = normal(rng);
  return out;
}

}  // namespace dpfermi
