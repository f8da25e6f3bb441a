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

#ifndef DPFERMI_OPTIMIZER_H_
#define DPFERMI_OPTIMIZER_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dpfermi/classifier.h"
#include "dpfermi/dataset.h"
#include "dpfermi/fairness.h"
#include "dpfermi/privacy.h"

namespace dpfermi {

enum class IterateRule { kLast, kUniformRandom };

struct SgdaConfig {
  double eta_theta = 0.01;
  double eta_w = 0.01;
  int64_t iterations = 1;
  int batch_size = 1024;
  // Per-sample l2 clipping of the loss gradient (FERMI training only).
  std::optional<double> clip_theta;
  double box_radius = 1.0;
  IterateRule iterate_rule = IterateRule::kLast;
  uint64_t seed = 0;
  // Record a trace entry every `trace_every` iterations; 0 disables tracing.
  int64_t trace_every = 0;

  void Validate() const;
};

// Lipschitz / smoothness constants of f(theta, w; z) as used by the step-size
// and iteration-count recommendation.
struct SmoothnessProfile {
  double lipschitz_theta = 1.0;
  double lipschitz_w = 1.0;
  double beta_theta = 1.0;
  double beta_w = 1.0;
  double beta_theta_w = 1.0;
  double mu = 1.0;
  double delta_phi = 0.0;
  int d_theta = 1;
  int d_w = 1;

  double kappa_w() const { return beta_w / mu; }
  double kappa_theta_w() const { return beta_theta_w / mu; }

  // All constants positive (delta_phi nonnegative) and kappa_w >= 1.
  void Validate() const;
};

// min_theta max_{w in W} F(theta, w) with F an average of per-sample terms.
// Gradient oracles must be unbiased for the full-batch gradients when the
// batch is drawn uniformly.
class MinMaxProblem {
 public:
  virtual ~MinMaxProblem() = default;

  virtual int theta_dim() const = 0;
  virtual int w_dim() const = 0;
  virtual int num_samples() const = 0;

  // Batch-averaged gradients of f at (theta, w). Outputs are resized.
  virtual void Gradients(const Eigen::VectorXd& theta, const Eigen::VectorXd& w,
                         std::span<const int> batch, Eigen::VectorXd& g_theta,
                         Eigen::VectorXd& g_w) const = 0;

  // Batch average of f.
  virtual double Objective(const Eigen::VectorXd& theta,
                           const Eigen::VectorXd& w,
                           std::span<const int> batch) const = 0;

  // Euclidean projection onto the feasible set of w.
  virtual void Project(Eigen::VectorXd& w) const = 0;
};

struct TraceRecord {
  int64_t iteration = 0;
  double objective = 0.0;
  double grad_theta_norm = 0.0;
  double grad_w_norm = 0.0;
};

struct TrainResult {
  Eigen::VectorXd theta;  // the selected iterate
  Eigen::VectorXd w;      // final dual iterate
  std::vector<TraceRecord> trace;
  int64_t chosen_iteration = 0;  // in [1, T]
};

// Noisy two-timescale stochastic gradient descent-ascent:
//   theta <- theta - eta_theta (g_theta + u),    u ~ N(0, sigma_theta^2 I)
//   w     <- Proj(w + eta_w (g_w + v)),          v ~ N(0, sigma_w^2 I)
// Batches are drawn uniformly with replacement. Batch sampling, noise and
// iterate selection use separate sub-streams of config.seed; per iteration u
// is drawn before v. Throws DivergenceError on a non-finite iterate or when
// the gradient oracle reports a numeric failure (kNumeric).
TrainResult DpSgda(const MinMaxProblem& problem, const Eigen::VectorXd& theta0,
                   const Eigen::VectorXd& w0, const SgdaConfig& config,
                   const NoiseScales& noise);

// Entrywise clamp to [-radius, radius].
Eigen::MatrixXd ProjectBox(const Eigen::MatrixXd& w, double radius);

// Where the theta noise enters the FERMI update. kInsideLambda follows the
// algorithm as written, theta -= eta (grad_loss + lambda (grad_psi + u)), so
// the injected noise is lambda * u. kOutsideLambda adds u unscaled.
enum class NoisePlacement { kInsideLambda, kOutsideLambda };

// f(theta, W; z_i) = loss_i(theta) + lambda psi_i(theta, W_{block(i)}) with
// the dual blocks stacked column-major into one vector and the entrywise box
// as feasible set.
class FermiProblem : public MinMaxProblem {
 public:
  FermiProblem(const TabularDataset& data, DualStack stack, double lambda,
               std::optional<double> clip_theta);

  int theta_dim() const override;
  int w_dim() const override;
  int num_samples() const override { return data_.size(); }

  void Gradients(const Eigen::VectorXd& theta, const Eigen::VectorXd& w,
                 std::span<const int> batch, Eigen::VectorXd& g_theta,
                 Eigen::VectorXd& g_w) const override;
  double Objective(const Eigen::VectorXd& theta, const Eigen::VectorXd& w,
                   std::span<const int> batch) const override;
  void Project(Eigen::VectorXd& w) const override;

  Eigen::VectorXd PackDuals() const;
  std::vector<DualMatrix> UnpackDuals(const Eigen::VectorXd& w) const;
  const DualStack& stack() const { return stack_; }

 private:
  const TabularDataset& data_;
  DualStack stack_;
  double lambda_;
  std::optional<double> clip_theta_;
  int block_size_;
};

struct FermiTrainOptions {
  NoisePlacement noise_placement = NoisePlacement::kInsideLambda;
};

struct FermiTrainResult {
  ModelParams model;
  DualStack duals;
  std::vector<TraceRecord> trace;
  int64_t chosen_iteration = 0;
};

// DP-FERMI: computes P_S^{-1/2} (per label for equalized odds) from `train`,
// starts from W = 0 and runs noisy SGDA on the FERMI min-max objective.
FermiTrainResult DpFermiTrain(const TabularDataset& train,
                              const ModelParams& init,
                              const FermiConfig& fermi,
                              const SgdaConfig& config,
                              const NoiseScales& noise,
                              const FermiTrainOptions& options = {});

struct Hyperparams {
  double eta_theta = 0.0;
  double eta_w = 0.0;
  int64_t iterations = 0;
};

// eta_theta = 1 / (16 kappa_w (beta_theta + beta_theta_w kappa_theta_w)),
// eta_w = 1 / beta_w and
// T = sqrt(kappa_w [delta_phi (beta_theta + beta_theta_w kappa_theta_w)
//                   + beta_theta_w^2 D^2]) eps n
//     * min(1 / (L_theta sqrt(d_theta)),
//           beta_w / (beta_theta_w L_w sqrt(kappa_w d_w))),
// rounded up and floored at MinIterations(n, m, eps).
Hyperparams RecommendedHyperparams(const SmoothnessProfile& profile,
                                   const PrivacyBudget& budget, int64_t n,
                                   int64_t m, double diameter);

// |grad L(theta) + lambda (1/n) sum_i grad_theta psi_i(theta, W*(theta))|
// with W* the closed-form inner maximizer: the gradient norm of the FERMI
// objective L + lambda ERMI_soft.
double StationarityGap(const ModelParams& theta, const TabularDataset& ds,
                       double lambda, const SensitiveStats& stats,
                       InnerMaxOptions options = {kDefaultInnerMaxRidge});
double StationarityGap(const ModelParams& theta, const TabularDataset& ds,
                       double lambda, const DualStack& stack,
                       InnerMaxOptions options = {kDefaultInnerMaxRidge});

struct SmoothnessProbeOptions {
  int probes = 200;
  double theta_scale = 1.0;   // theta probes ~ N(0, theta_scale^2)
  double perturbation = 1e-3;
  uint64_t seed = 0;
};

// Heuristic estimate of the constants in SmoothnessProfile for the FERMI
// objective on `ds`, from gradient differences at random probe pairs. The
// result is an empirical lower estimate of each sup, not a certified bound.
// delta_phi defaults to the objective at theta = 0 (Phi >= 0 bounds the gap).
SmoothnessProfile EstimateSmoothness(const TabularDataset& ds,
                                     const FermiConfig& fermi,
                                     double box_radius,
                                     const SmoothnessProbeOptions& options);

// One JSON object per line: iteration, objective, grad_theta_norm,
// grad_w_norm.
void WriteTraceJsonl(const std::vector<TraceRecord>& trace,
                     const std::filesystem::path& path);

}  // namespace dpfermi

#endif  // DPFERMI_OPTIMIZER_H_
