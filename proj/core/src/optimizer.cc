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

#include "dpfermi/optimizer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "dpfermi/error.h"
#include "dpfermi/random.h"
#include "json.hpp"

namespace dpfermi {
namespace {

// Sub-stream tags under SgdaConfig::seed.
constexpr uint64_t kBatchStream = 1;
constexpr uint64_t kNoiseStream = 2;
constexpr uint64_t kIterateStream = 3;

TrainResult RunSgda(const MinMaxProblem& problem, const Eigen::VectorXd& theta0,
                    const Eigen::VectorXd& w0, const SgdaConfig& config,
                    const NoiseScales& noise, double theta_noise_multiplier) {
  config.Validate();
  if (theta0.size() != problem.theta_dim() || w0.size() != problem.w_dim()) {
    throw Error(ErrorCode::kInvalidArgument,
                "initial iterates do not match the problem dimensions");
  }
  if (config.batch_size > problem.num_samples()) {
    throw Error(ErrorCode::kInvalidArgument,
                "batch size " + std::to_string(config.batch_size) +
                    " exceeds the number of samples " +
                    std::to_string(problem.num_samples()));
  }

  Rng batch_rng(DeriveSeed(config.seed, {kBatchStream}));
  Rng noise_rng(DeriveSeed(config.seed, {kNoiseStream}));
  Rng iterate_rng(DeriveSeed(config.seed, {kIterateStream}));

  const int64_t T = config.iterations;
  int64_t chosen = T;
  if (config.iterate_rule == IterateRule::kUniformRandom) {
    chosen = std::uniform_int_distribution<int64_t>(1, T)(iterate_rng);
  }

  TrainResult result;
  Eigen::VectorXd theta = theta0;
  Eigen::VectorXd w = w0;
  problem.Project(w);
  Eigen::VectorXd g_theta;
  Eigen::VectorXd g_w;
  for (int64_t t = 0; t < T; ++t) {
    const std::vector<int> batch =
        Minibatch(problem.num_samples(), config.batch_size, batch_rng);
    try {
      problem.Gradients(theta, w, batch, g_theta, g_w);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric) throw;
      throw DivergenceError(t, "gradient");
    }
    const Eigen::VectorXd u =
        GaussianNoise(noise_rng, noise.sigma_theta_sq, problem.theta_dim());
    const Eigen::VectorXd v =
        GaussianNoise(noise_rng, noise.sigma_w_sq, problem.w_dim());

    if (config.trace_every > 0 && t % config.trace_every == 0) {
      result.trace.push_back(TraceRecord{t, problem.Objective(theta, w, batch),
                                         g_theta.norm(), g_w.norm()});
    }

    theta.noalias() -= config.eta_theta * (g_theta + theta_noise_multiplier * u);
    w.noalias() += config.eta_w * (g_w + v);
    problem.Project(w);

    if (!theta.allFinite()) throw DivergenceError(t, "theta");
    if (!w.allFinite()) throw DivergenceError(t, "dual variable");
    if (t + 1 == chosen) result.theta = theta;
  }
  result.w = std::move(w);
  result.chosen_iteration = chosen;
  return result;
}

}  // namespace

void SgdaConfig::Validate() const {
  if (!(eta_theta > 0.0) || !(eta_w > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "step sizes must be positive");
  }
  if (iterations < 1) {
    throw Error(ErrorCode::kInvalidArgument, "iterations must be positive");
  }
  if (batch_size < 1) {
    throw Error(ErrorCode::kInvalidArgument, "batch size must be positive");
  }
  if (clip_theta && !(*clip_theta > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "clip threshold must be positive");
  }
  if (!(box_radius > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "box radius must be positive");
  }
  if (trace_every < 0) {
    throw Error(ErrorCode::kInvalidArgument, "trace interval must be >= 0");
  }
}

void SmoothnessProfile::Validate() const {
  for (double c : {lipschitz_theta, lipschitz_w, beta_theta, beta_w,
                   beta_theta_w, mu}) {
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "smoothness constants must be positive and finite");
    }
  }
  if (!(delta_phi >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "delta_phi must be nonnegative");
  }
  if (d_theta < 1 || d_w < 1) {
    throw Error(ErrorCode::kInvalidArgument, "dimensions must be positive");
  }
  if (kappa_w() < 1.0) {
    throw Error(ErrorCode::kInvalidArgument,
                "beta_w must be at least mu (kappa_w >= 1)");
  }
}

TrainResult DpSgda(const MinMaxProblem& problem, const Eigen::VectorXd& theta0,
                   const Eigen::VectorXd& w0, const SgdaConfig& config,
                   const NoiseScales& noise) {
  return RunSgda(problem, theta0, w0, config, noise, 1.0);
}

Eigen::MatrixXd ProjectBox(const Eigen::MatrixXd& w, double radius) {
  if (!(radius > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "box radius must be positive");
  }
  return w.cwiseMax(-radius).cwiseMin(radius);
}

FermiProblem::FermiProblem(const TabularDataset& data, DualStack stack,
                           double lambda, std::optional<double> clip_theta)
    : data_(data),
      stack_(std::move(stack)),
      lambda_(lambda),
      clip_theta_(clip_theta),
      block_size_(data.num_groups() * data.num_labels()) {
  if (stack_.num_blocks() < 1 ||
      stack_.stats.size() != stack_.duals.size()) {
    throw Error(ErrorCode::kInvalidArgument, "malformed dual stack");
  }
  for (const DualMatrix& d : stack_.duals) {
    if (d.w.rows() != data.num_groups() || d.w.cols() != data.num_labels()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "dual block shape does not match the data");
    }
  }
}

int FermiProblem::theta_dim() const {
  return data_.num_labels() * data_.num_features() + data_.num_labels();
}

int FermiProblem::w_dim() const { return stack_.num_blocks() * block_size_; }

void FermiProblem::Gradients(const Eigen::VectorXd& theta,
                             const Eigen::VectorXd& w,
                             std::span<const int> batch,
                             Eigen::VectorXd& g_theta,
                             Eigen::VectorXd& g_w) const {
  const int k = data_.num_groups();
  const int l = data_.num_labels();
  const ModelParams params(theta, l, data_.num_features());
  g_theta.setZero(theta_dim());
  g_w.setZero(w_dim());
  std::vector<Eigen::MatrixXd> duals(stack_.num_blocks());
  std::vector<Eigen::MatrixXd> dual_grads(stack_.num_blocks(),
                                          Eigen::MatrixXd::Zero(k, l));
  for (int b = 0; b < stack_.num_blocks(); ++b) {
    duals[b] = Eigen::Map<const Eigen::MatrixXd>(w.data() + b * block_size_, k, l);
  }

  Eigen::VectorXd loss_grad(theta_dim());
  for (int i : batch) {
    const auto x = data_.x(i);
    const Eigen::VectorXd probs = PredictProba(params, x);
    Eigen::VectorXd residual = probs;
    residual[data_.label(i)] -= 1.0;
    Eigen::Map<RowMatrix>(loss_grad.data(), l, data_.num_features()) =
        residual * x.transpose();
    loss_grad.tail(l) = residual;
    if (clip_theta_) {
      const double norm = loss_grad.norm();
      if (norm > *clip_theta_) loss_grad *= *clip_theta_ / norm;
    }
    g_theta += loss_grad;
    if (lambda_ == 0.0) continue;
    const int b = stack_.BlockOf(data_.label(i));
    const SensitiveStats& stats = stack_.stats[b];
    AddProbaVjp(x, probs, PsiThetaCoefficients(duals[b], data_.group(i), stats),
                lambda_, g_theta);
    AddPsiGradWFromProba(probs, duals[b], data_.group(i), stats, lambda_,
                         dual_grads[b]);
  }
  const double inv_m = 1.0 / static_cast<double>(batch.size());
  g_theta *= inv_m;
  for (int b = 0; b < stack_.num_blocks(); ++b) {
    Eigen::Map<Eigen::MatrixXd>(g_w.data() + b * block_size_, k, l) =
        dual_grads[b] * inv_m;
  }
}

double FermiProblem::Objective(const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& w,
                               std::span<const int> batch) const {
  const int k = data_.num_groups();
  const int l = data_.num_labels();
  const ModelParams params(theta, l, data_.num_features());
  double total = 0.0;
  for (int i : batch) {
    const Eigen::VectorXd probs = PredictProba(params, data_.x(i));
    total += -std::log(std::max(probs[data_.label(i)], 1e-30));
    if (lambda_ == 0.0) continue;
    const int b = stack_.BlockOf(data_.label(i));
    const Eigen::Map<const Eigen::MatrixXd> dual(w.data() + b * block_size_, k, l);
    total += lambda_ * PsiFromProba(probs, dual, data_.group(i), stack_.stats[b]);
  }
  return total / static_cast<double>(batch.size());
}

void FermiProblem::Project(Eigen::VectorXd& w) const {
  for (int b = 0; b < stack_.num_blocks(); ++b) {
    const double r = stack_.duals[b].box_radius;
    auto block = w.segment(b * block_size_, block_size_);
    block = block.cwiseMax(-r).cwiseMin(r);
  }
}

Eigen::VectorXd FermiProblem::PackDuals() const {
  Eigen::VectorXd w(w_dim());
  for (int b = 0; b < stack_.num_blocks(); ++b) {
    w.segment(b * block_size_, block_size_) =
        Eigen::Map<const Eigen::VectorXd>(stack_.duals[b].w.data(), block_size_);
  }
  return w;
}

std::vector<DualMatrix> FermiProblem::UnpackDuals(
    const Eigen::VectorXd& w) const {
  std::vector<DualMatrix> out = stack_.duals;
  for (int b = 0; b < stack_.num_blocks(); ++b) {
    out[b].w = Eigen::Map<const Eigen::MatrixXd>(
        w.data() + b * block_size_, data_.num_groups(), data_.num_labels());
  }
  return out;
}

FermiTrainResult DpFermiTrain(const TabularDataset& train,
                              const ModelParams& init,
                              const FermiConfig& fermi,
                              const SgdaConfig& config,
                              const NoiseScales& noise,
                              const FermiTrainOptions& options) {
  fermi.Validate();
  config.Validate();
  if (init.num_labels() != train.num_labels() ||
      init.num_features() != train.num_features()) {
    throw Error(ErrorCode::kInvalidArgument,
                "initial model does not match the dataset dimensions");
  }
  FermiProblem problem(train,
                       MakeDualStack(train, fermi.notion, config.box_radius),
                       fermi.lambda, config.clip_theta);
  const double multiplier =
      options.noise_placement == NoisePlacement::kInsideLambda ? fermi.lambda
                                                               : 1.0;
  TrainResult raw = RunSgda(problem, init.flat(), problem.PackDuals(), config,
                            noise, multiplier);
  FermiTrainResult result{
      ModelParams(std::move(raw.theta), train.num_labels(),
                  train.num_features()),
      problem.stack(), std::move(raw.trace), raw.chosen_iteration};
  result.duals.duals = problem.UnpackDuals(raw.w);
  return result;
}

Hyperparams RecommendedHyperparams(const SmoothnessProfile& profile,
                                   const PrivacyBudget& budget, int64_t n,
                                   int64_t m, double diameter) {
  profile.Validate();
  budget.Validate();
  if (!(diameter >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "diameter must be nonnegative");
  }
  const double kw = profile.kappa_w();
  const double ktw = profile.kappa_theta_w();
  const double coupled = profile.beta_theta + profile.beta_theta_w * ktw;

  Hyperparams h;
  h.eta_theta = 1.0 / (16.0 * kw * coupled);
  h.eta_w = 1.0 / profile.beta_w;

  const double scale = std::sqrt(
      kw * (profile.delta_phi * coupled +
            profile.beta_theta_w * profile.beta_theta_w * diameter * diameter));
  const double per_theta =
      1.0 / (profile.lipschitz_theta * std::sqrt(static_cast<double>(profile.d_theta)));
  const double per_w =
      profile.beta_w / (profile.beta_theta_w * profile.lipschitz_w *
                        std::sqrt(kw * static_cast<double>(profile.d_w)));
  const double raw =
      scale * budget.epsilon * static_cast<double>(n) * std::min(per_theta, per_w);
  const int64_t floor_t = std::max<int64_t>(1, MinIterations(n, m, budget.epsilon));
  h.iterations = std::max(floor_t, static_cast<int64_t>(std::ceil(raw)));
  return h;
}

double StationarityGap(const ModelParams& theta, const TabularDataset& ds,
                       double lambda, const SensitiveStats& stats,
                       InnerMaxOptions options) {
  Eigen::VectorXd grad = EmpiricalLossGrad(theta, ds);
  if (lambda != 0.0) {
    const Eigen::MatrixXd w_star = InnerMaxClosedForm(theta, ds, stats, options);
    grad += lambda * BatchPsiGradTheta(theta, w_star, ds, {}, stats);
  }
  return grad.norm();
}

double StationarityGap(const ModelParams& theta, const TabularDataset& ds,
                       double lambda, const DualStack& stack,
                       InnerMaxOptions options) {
  if (stack.notion == FairnessNotion::kDemographicParity) {
    return StationarityGap(theta, ds, lambda, stack.stats.at(0), options);
  }
  Eigen::VectorXd grad = EmpiricalLossGrad(theta, ds);
  if (lambda != 0.0) {
    const std::vector<Eigen::MatrixXd> w_star =
        InnerMaxClosedForm(theta, ds, stack, options);
    Eigen::VectorXd psi_grad = Eigen::VectorXd::Zero(theta.dim());
    for (int i = 0; i < ds.size(); ++i) {
      const int b = stack.BlockOf(ds.label(i));
      AddProbaVjp(ds.x(i), PredictProba(theta, ds.x(i)),
                  PsiThetaCoefficients(w_star[b], ds.group(i), stack.stats[b]),
                  1.0 / ds.size(), psi_grad);
    }
    grad += lambda * psi_grad;
  }
  return grad.norm();
}

SmoothnessProfile EstimateSmoothness(const TabularDataset& ds,
                                     const FermiConfig& fermi,
                                     double box_radius,
                                     const SmoothnessProbeOptions& options) {
  fermi.Validate();
  if (!(fermi.lambda > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "smoothness probe needs lambda > 0 (no strong concavity "
                "otherwise)");
  }
  if (options.probes < 1 || !(options.perturbation > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid probe options");
  }
  const DualStack stack = MakeDualStack(ds, fermi.notion, box_radius);
  FermiProblem problem(ds, stack, fermi.lambda, std::nullopt);
  Rng rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> box(-box_radius, box_radius);
  std::uniform_int_distribution<int> pick(0, ds.size() - 1);

  const auto random_vector = [&](int dim, double scale) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = scale * normal(rng);
    return v;
  };
  const auto random_dual = [&] {
    Eigen::VectorXd v(problem.w_dim());
    for (int i = 0; i < v.size(); ++i) v[i] = box(rng);
    return v;
  };

  SmoothnessProfile p;
  p.d_theta = problem.theta_dim();
  p.d_w = problem.w_dim();
  p.lipschitz_theta = p.lipschitz_w = 0.0;
  p.beta_theta = p.beta_w = p.beta_theta_w = 0.0;
  p.mu = std::numeric_limits<double>::infinity();

  Eigen::VectorXd gt;
  Eigen::VectorXd gw;
  Eigen::VectorXd gt2;
  Eigen::VectorXd gw2;
  for (int probe = 0; probe < options.probes; ++probe) {
    const Eigen::VectorXd theta = random_vector(p.d_theta, options.theta_scale);
    const Eigen::VectorXd w = random_dual();
    const std::vector<int> one{pick(rng)};
    problem.Gradients(theta, w, one, gt, gw);
    p.lipschitz_theta = std::max(p.lipschitz_theta, gt.norm());
    p.lipschitz_w = std::max(p.lipschitz_w, gw.norm());

    const Eigen::VectorXd dtheta = random_vector(p.d_theta, 1.0).normalized() *
                                   options.perturbation;
    problem.Gradients(theta + dtheta, w, one, gt2, gw2);
    p.beta_theta = std::max(p.beta_theta, (gt2 - gt).norm() / dtheta.norm());
    p.beta_theta_w = std::max(p.beta_theta_w, (gw2 - gw).norm() / dtheta.norm());

    const Eigen::VectorXd dw =
        random_vector(p.d_w, 1.0).normalized() * options.perturbation;
    problem.Gradients(theta, w + dw, one, gt2, gw2);
    p.beta_w = std::max(p.beta_w, (gw2 - gw).norm() / dw.norm());
    p.beta_theta_w = std::max(p.beta_theta_w, (gt2 - gt).norm() / dw.norm());

    // Strong concavity of the dataset-averaged objective in W: twice lambda
    // times the smallest soft marginal.
    const ModelParams params(theta, ds.num_labels(), ds.num_features());
    const SoftJoint sj = ComputeSoftJoint(params, ds);
    p.mu = std::min(p.mu, 2.0 * fermi.lambda * sj.marginal.minCoeff());
  }
  p.beta_w = std::max(p.beta_w, p.mu);

  const ModelParams zero(ds.num_labels(), ds.num_features());
  p.delta_phi = EmpiricalLoss(zero, ds) +
                fermi.lambda * std::max(0.0, StackErmiSoft(zero, ds, stack));
  return p;
}

void WriteTraceJsonl(const std::vector<TraceRecord>& trace,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const TraceRecord& r : trace) {
    nlohmann::json j = {{"iteration", r.iteration},
                        {"objective", r.objective},
                        {"grad_theta_norm", r.grad_theta_norm},
                        {"grad_w_norm", r.grad_w_norm}};
    out << j.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace dpfermi
