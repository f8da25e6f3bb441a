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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include "json.hpp"

#include "dpfermi/error.h"
#include "dpfermi/harness.h"
#include "test_util.h"

namespace dpfermi {
namespace {

using ::dpfermi::testing::NumericGradient;
using ::dpfermi::testing::RandomDataset;
using ::dpfermi::testing::RandomParams;
using ::dpfermi::testing::RelativeError;

// f(theta, w) = theta w - w^2 / 2 on scalars; Phi(theta) = theta^2 / 2.
class ToyProblem : public MinMaxProblem {
 public:
  int theta_dim() const override { return 1; }
  int w_dim() const override { return 1; }
  int num_samples() const override { return 4; }
  void Gradients(const Eigen::VectorXd& theta, const Eigen::VectorXd& w,
                 std::span<const int>, Eigen::VectorXd& g_theta,
                 Eigen::VectorXd& g_w) const override {
    g_theta = w;
    g_w = theta - w;
  }
  double Objective(const Eigen::VectorXd& theta, const Eigen::VectorXd& w,
                   std::span<const int>) const override {
    return theta[0] * w[0] - 0.5 * w[0] * w[0];
  }
  void Project(Eigen::VectorXd& w) const override {
    w = w.cwiseMax(-10.0).cwiseMin(10.0);
  }
};

class ZeroProblem : public MinMaxProblem {
 public:
  int theta_dim() const override { return 3; }
  int w_dim() const override { return 2; }
  int num_samples() const override { return 5; }
  void Gradients(const Eigen::VectorXd&, const Eigen::VectorXd&, std::span<const int>,
                 Eigen::VectorXd& g_theta, Eigen::VectorXd& g_w) const override {
    g_theta.setZero(3);
    g_w.setZero(2);
  }
  double Objective(const Eigen::VectorXd&, const Eigen::VectorXd&,
                   std::span<const int>) const override {
    return 0.0;
  }
  void Project(Eigen::VectorXd&) const override {}
};

// Delegates to a FermiProblem and checks the box before every gradient call.
class BoxCheckingProblem : public MinMaxProblem {
 public:
  BoxCheckingProblem(const FermiProblem& inner, double radius)
      : inner_(inner), radius_(radius) {}
  int theta_dim() const override { return inner_.theta_dim(); }
  int w_dim() const override { return inner_.w_dim(); }
  int num_samples() const override { return inner_.num_samples(); }
  void Gradients(const Eigen::VectorXd& theta, const Eigen::VectorXd& w,
                 std::span<const int> batch, Eigen::VectorXd& g_theta,
                 Eigen::VectorXd& g_w) const override {
    ++calls;
    if (w.cwiseAbs().maxCoeff() > radius_) ++violations;
    inner_.Gradients(theta, w, batch, g_theta, g_w);
  }
  double Objective(const Eigen::VectorXd& theta, const Eigen::VectorXd& w,
                   std::span<const int> batch) const override {
    return inner_.Objective(theta, w, batch);
  }
  void Project(Eigen::VectorXd& w) const override { inner_.Project(w); }

  mutable int calls = 0;
  mutable int violations = 0;

 private:
  const FermiProblem& inner_;
  double radius_;
};

SgdaConfig Config(int64_t iterations, int batch, double eta, uint64_t seed) {
  SgdaConfig c;
  c.eta_theta = eta;
  c.eta_w = eta;
  c.iterations = iterations;
  c.batch_size = batch;
  c.seed = seed;
  return c;
}

// ---------------------------------------------------------------------------
// Generic SGDA.

TEST(DpSgdaTest, ZeroGradientsLeaveIteratesUnchanged) {
  const Eigen::VectorXd theta0 = Eigen::Vector3d(1, -2, 3);
  const Eigen::VectorXd w0 = Eigen::Vector2d(0.5, -0.25);
  const TrainResult r = DpSgda(ZeroProblem(), theta0, w0, Config(50, 2, 0.3, 1), {});
  EXPECT_EQ(r.theta, theta0);
  EXPECT_EQ(r.w, w0);
  EXPECT_EQ(r.chosen_iteration, 50);
}

TEST(DpSgdaTest, ToyProblemConverges) {
  const TrainResult r = DpSgda(ToyProblem(), Eigen::VectorXd::Ones(1),
                               Eigen::VectorXd::Zero(1), Config(500, 1, 0.1, 0), {});
  EXPECT_LE(std::abs(r.theta[0]), 1e-3);
  // Independent simulation of the same linear recursion.
  double theta = 1.0;
  double w = 0.0;
  for (int t = 0; t < 500; ++t) {
    const double g_theta = w;
    const double g_w = theta - w;
    theta -= 0.1 * g_theta;
    w += 0.1 * g_w;
  }
  EXPECT_DOUBLE_EQ(r.theta[0], theta);
  EXPECT_DOUBLE_EQ(r.w[0], w);
}

TEST(DpSgdaTest, NoiseIsDeterministicGivenSeed) {
  SgdaConfig c = Config(200, 1, 0.05, 17);
  c.trace_every = 10;
  const NoiseScales noise{0.5, 0.2};
  const TrainResult a = DpSgda(ToyProblem(), Eigen::VectorXd::Ones(1),
                               Eigen::VectorXd::Zero(1), c, noise);
  const TrainResult b = DpSgda(ToyProblem(), Eigen::VectorXd::Ones(1),
                               Eigen::VectorXd::Zero(1), c, noise);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.w, b.w);
  ASSERT_EQ(a.trace.size(), 20u);
  for (size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].iteration, static_cast<int64_t>(10 * i));
    EXPECT_EQ(a.trace[i].objective, b.trace[i].objective);
    EXPECT_EQ(a.trace[i].grad_theta_norm, b.trace[i].grad_theta_norm);
  }
  c.seed = 18;
  const TrainResult other = DpSgda(ToyProblem(), Eigen::VectorXd::Ones(1),
                                   Eigen::VectorXd::Zero(1), c, noise);
  EXPECT_NE(a.theta, other.theta);
}

TEST(DpSgdaTest, NoiseStreamOrderUThenV) {
  // With zero gradients the iterates are the scaled running sums of the noise
  // draws, u before v in each iteration.
  const int64_t T = 7;
  SgdaConfig c = Config(T, 1, 0.5, 5);
  const NoiseScales noise{2.0, 0.5};
  const TrainResult r = DpSgda(ZeroProblem(), Eigen::VectorXd::Zero(3),
                               Eigen::VectorXd::Zero(2), c, noise);
  Rng rng(DeriveSeed(5, {2}));
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(2);
  for (int64_t t = 0; t < T; ++t) {
    theta -= 0.5 * GaussianNoise(rng, 2.0, 3);
    w += 0.5 * GaussianNoise(rng, 0.5, 2);
  }
  EXPECT_LE((r.theta - theta).norm(), 1e-14);
  EXPECT_LE((r.w - w).norm(), 1e-14);
}

TEST(DpSgdaTest, UniformIterateRule) {
  SgdaConfig c = Config(100, 1, 0.1, 3);
  c.iterate_rule = IterateRule::kUniformRandom;
  const TrainResult r = DpSgda(ToyProblem(), Eigen::VectorXd::Ones(1),
                               Eigen::VectorXd::Zero(1), c, {});
  ASSERT_GE(r.chosen_iteration, 1);
  ASSERT_LE(r.chosen_iteration, 100);
  c.iterations = r.chosen_iteration;
  c.iterate_rule = IterateRule::kLast;
  const TrainResult prefix = DpSgda(ToyProblem(), Eigen::VectorXd::Ones(1),
                                    Eigen::VectorXd::Zero(1), c, {});
  EXPECT_EQ(r.theta, prefix.theta);
}

// Descent on -theta^2 / 2 multiplies theta by (1 + eta) each step.
class ExplodingProblem : public ZeroProblem {
 public:
  void Gradients(const Eigen::VectorXd& theta, const Eigen::VectorXd&, std::span<const int>,
                 Eigen::VectorXd& g_theta, Eigen::VectorXd& g_w) const override {
    g_theta = -theta;
    g_w.setZero(2);
  }
};

TEST(DpSgdaTest, DivergenceIsReported) {
  // 1e100, 1e200, 1e300, then overflow in the fourth step.
  try {
    DpSgda(ExplodingProblem(), Eigen::VectorXd::Ones(3), Eigen::VectorXd::Zero(2),
           Config(100, 1, 1e100, 0), {});
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDivergence);
    EXPECT_EQ(e.iteration(), 3);
  }
}

TEST(DpSgdaTest, ConfigValidation) {
  const auto run = [](SgdaConfig c) {
    DpSgda(ToyProblem(), Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1), c, {});
  };
  SgdaConfig c = Config(10, 1, 0.1, 0);
  c.eta_theta = 0.0;
  EXPECT_THROW(run(c), Error);
  c = Config(0, 1, 0.1, 0);
  EXPECT_THROW(run(c), Error);
  c = Config(10, 5, 0.1, 0);  // batch larger than the 4 samples
  EXPECT_THROW(run(c), Error);
  c = Config(10, 1, 0.1, 0);
  c.clip_theta = -1.0;
  EXPECT_THROW(run(c), Error);
  EXPECT_THROW(DpSgda(ToyProblem(), Eigen::VectorXd::Ones(2), Eigen::VectorXd::Zero(1),
                      Config(10, 1, 0.1, 0), {}),
               Error);
}

// ---------------------------------------------------------------------------
// Projection.

TEST(ProjectBoxTest, Examples) {
  Eigen::MatrixXd inside(2, 2);
  inside << 0.5, -1.0, 1.0, 0.0;
  EXPECT_EQ(ProjectBox(inside, 1.0), inside);
  Eigen::MatrixXd w(1, 3);
  w << 3.5, -7.0, 1.0;
  Eigen::MatrixXd expected(1, 3);
  expected << 2.0, -2.0, 1.0;
  EXPECT_EQ(ProjectBox(w, 2.0), expected);
  EXPECT_EQ(ProjectBox(ProjectBox(w, 2.0), 2.0), ProjectBox(w, 2.0));
  EXPECT_THROW(ProjectBox(w, 0.0), Error);
}

// ---------------------------------------------------------------------------
// FERMI problem.

TEST(FermiProblemTest, GradientsMatchFiniteDifferences) {
  for (FairnessNotion notion :
       {FairnessNotion::kDemographicParity, FairnessNotion::kEqualizedOdds}) {
    const TabularDataset ds = RandomDataset(12, 3, 3, 2, 31, 1.0, true);
    FermiProblem problem(ds, MakeDualStack(ds, notion, 1.0), 0.7, std::nullopt);
    const Eigen::VectorXd theta = RandomParams(3, 3, 32, 0.5).flat();
    Eigen::VectorXd w = ::dpfermi::testing::RandomMatrix(problem.w_dim(), 1, 33, 1.0);
    const std::vector<int> batch = {0, 3, 3, 8, 11};
    Eigen::VectorXd gt;
    Eigen::VectorXd gw;
    problem.Gradients(theta, w, batch, gt, gw);
    const Eigen::VectorXd fd_t = NumericGradient(
        [&](const Eigen::VectorXd& v) { return problem.Objective(v, w, batch); }, theta);
    const Eigen::VectorXd fd_w = NumericGradient(
        [&](const Eigen::VectorXd& v) { return problem.Objective(theta, v, batch); }, w);
    EXPECT_LE(RelativeError(gt, fd_t), 1e-6);
    EXPECT_LE(RelativeError(gw, fd_w), 1e-6);
  }
}

TEST(FermiProblemTest, EnumeratedBatchesAreUnbiased) {
  // Every ordered with-replacement pair from n = 6 samples.
  for (FairnessNotion notion :
       {FairnessNotion::kDemographicParity, FairnessNotion::kEqualizedOdds}) {
    const TabularDataset ds = RandomDataset(6, 2, 2, 2, 34, 1.0, true);
    FermiProblem problem(ds, MakeDualStack(ds, notion, 1.0), 1.3, std::nullopt);
    const Eigen::VectorXd theta = RandomParams(2, 2, 35).flat();
    const Eigen::VectorXd w = ::dpfermi::testing::RandomMatrix(problem.w_dim(), 1, 36);
    Eigen::VectorXd gt;
    Eigen::VectorXd gw;
    Eigen::VectorXd sum_t = Eigen::VectorXd::Zero(problem.theta_dim());
    Eigen::VectorXd sum_w = Eigen::VectorXd::Zero(problem.w_dim());
    for (int a = 0; a < 6; ++a) {
      for (int b = 0; b < 6; ++b) {
        problem.Gradients(theta, w, std::vector<int>{a, b}, gt, gw);
        sum_t += gt;
        sum_w += gw;
      }
    }
    problem.Gradients(theta, w, std::vector<int>{0, 1, 2, 3, 4, 5}, gt, gw);
    EXPECT_LE((sum_t / 36.0 - gt).norm(), 1e-13);
    EXPECT_LE((sum_w / 36.0 - gw).norm(), 1e-13);
  }
}

TEST(FermiProblemTest, PackAndProject) {
  const TabularDataset ds = RandomDataset(12, 2, 3, 2, 37, 1.0, true);
  DualStack stack = MakeDualStack(ds, FairnessNotion::kEqualizedOdds, 0.5);
  stack.duals[1].w(1, 2) = 0.25;
  FermiProblem problem(ds, stack, 1.0, std::nullopt);
  EXPECT_EQ(problem.w_dim(), 3 * 6);
  Eigen::VectorXd w = problem.PackDuals();
  EXPECT_EQ(w[6 + 2 * 2 + 1], 0.25);  // block 1, column-major (r=1, j=2)
  w.setConstant(3.0);
  problem.Project(w);
  EXPECT_EQ(w.maxCoeff(), 0.5);
  const std::vector<DualMatrix> back = problem.UnpackDuals(w);
  EXPECT_EQ(back.size(), 3u);
  EXPECT_EQ(back[2].w, Eigen::MatrixXd::Constant(2, 3, 0.5));
}

TEST(DpFermiTrainTest, LambdaZeroIsPlainSgd) {
  const TabularDataset ds = RandomDataset(40, 3, 3, 2, 40);
  const ModelParams init = RandomParams(3, 3, 41, 0.1);
  SgdaConfig c = Config(60, 8, 0.2, 42);
  for (NoisePlacement placement : {NoisePlacement::kInsideLambda, NoisePlacement::kOutsideLambda}) {
    const FermiTrainResult r = DpFermiTrain(ds, init, {0.0, FairnessNotion::kDemographicParity},
                                            c, {}, {placement});
    Rng batch_rng(DeriveSeed(42, {1}));
    Eigen::VectorXd theta = init.flat();
    for (int t = 0; t < 60; ++t) {
      const std::vector<int> batch = Minibatch(40, 8, batch_rng);
      const ModelParams p(theta, 3, 3);
      Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.size());
      for (int i : batch) g += LossGrad(p, ds.x(i), ds.label(i));
      theta -= 0.2 * g / 8.0;
    }
    EXPECT_LE((r.model.flat() - theta).norm(), 1e-12);
    EXPECT_EQ(r.duals.duals[0].w, Eigen::MatrixXd::Zero(2, 3));
  }
}

TEST(DpFermiTrainTest, LambdaZeroWithNoise) {
  const TabularDataset ds = RandomDataset(40, 3, 2, 2, 43);
  const ModelParams init(2, 3);
  const SgdaConfig c = Config(30, 8, 0.2, 44);
  const NoiseScales noise{0.3, 0.4};
  const FermiConfig fermi{0.0, FairnessNotion::kDemographicParity};

  // Replay the noise stream: W is the box-projected noise walk, theta is SGD
  // plus lambda u (nothing for the literal placement, u for the outside one).
  for (NoisePlacement placement : {NoisePlacement::kInsideLambda, NoisePlacement::kOutsideLambda}) {
    const FermiTrainResult r = DpFermiTrain(ds, init, fermi, c, noise, {placement});
    Rng batch_rng(DeriveSeed(44, {1}));
    Rng noise_rng(DeriveSeed(44, {2}));
    Eigen::VectorXd theta = init.flat();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(4);
    for (int t = 0; t < 30; ++t) {
      const std::vector<int> batch = Minibatch(40, 8, batch_rng);
      const ModelParams p(theta, 2, 3);
      Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.size());
      for (int i : batch) g += LossGrad(p, ds.x(i), ds.label(i));
      const Eigen::VectorXd u = GaussianNoise(noise_rng, 0.3, theta.size());
      const Eigen::VectorXd v = GaussianNoise(noise_rng, 0.4, 4);
      const double mult = placement == NoisePlacement::kInsideLambda ? 0.0 : 1.0;
      theta -= 0.2 * (g / 8.0 + mult * u);
      w = (w + 0.2 * v).cwiseMax(-1.0).cwiseMin(1.0);
    }
    EXPECT_LE((r.model.flat() - theta).norm(), 1e-12);
    const Eigen::MatrixXd& final_w = r.duals.duals[0].w;
    EXPECT_LE((Eigen::Map<const Eigen::VectorXd>(final_w.data(), 4) - w).norm(), 1e-14);
    EXPECT_GT(w.norm(), 0.0);
  }
}

TEST(DpFermiTrainTest, BoxInvariantHoldsEveryIteration) {
  const TabularDataset ds = RandomDataset(60, 3, 3, 3, 45, 1.0, true);
  for (FairnessNotion notion :
       {FairnessNotion::kDemographicParity, FairnessNotion::kEqualizedOdds}) {
    FermiProblem inner(ds, MakeDualStack(ds, notion, 0.3), 5.0, std::nullopt);
    BoxCheckingProblem problem(inner, 0.3);
    SgdaConfig c = Config(300, 10, 0.5, 46);
    const TrainResult r = DpSgda(problem, Eigen::VectorXd::Zero(inner.theta_dim()),
                                 inner.PackDuals(), c, {1.0, 4.0});
    EXPECT_EQ(problem.calls, 300);
    EXPECT_EQ(problem.violations, 0);
    EXPECT_LE(r.w.cwiseAbs().maxCoeff(), 0.3);
    EXPECT_DOUBLE_EQ(r.w.cwiseAbs().maxCoeff(), 0.3);  // the noise hits the box
  }
}

TEST(DpFermiTrainTest, DeterministicAndReducesErmi) {
  SyntheticSpec spec;
  spec.n = 600;
  spec.bias = 0.8;
  spec.seed = 3;
  const TabularDataset ds = SynthDataset(spec);
  const ModelParams init(ds.num_labels(), ds.num_features());
  SgdaConfig c = Config(1500, 64, 0.05, 7);
  c.eta_w = 0.5;
  const SensitiveStats stats = ComputeSensitiveStats(ds);
  const FermiTrainResult plain =
      DpFermiTrain(ds, init, {0.0, FairnessNotion::kDemographicParity}, c, {});
  const FermiTrainResult fair =
      DpFermiTrain(ds, init, {3.0, FairnessNotion::kDemographicParity}, c, {});
  const FermiTrainResult again =
      DpFermiTrain(ds, init, {3.0, FairnessNotion::kDemographicParity}, c, {});
  EXPECT_EQ(fair.model.flat(), again.model.flat());
  EXPECT_EQ(fair.duals.duals[0].w, again.duals.duals[0].w);
  EXPECT_LT(ErmiSoft(fair.model, ds, stats), 0.5 * ErmiSoft(plain.model, ds, stats));
}

TEST(DpFermiTrainTest, InitMismatchThrows) {
  const TabularDataset ds = RandomDataset(20, 3, 2, 2, 47);
  EXPECT_THROW(DpFermiTrain(ds, ModelParams(2, 4), {1.0, FairnessNotion::kDemographicParity},
                            Config(5, 4, 0.1, 0), {}),
               Error);
}

// ---------------------------------------------------------------------------
// Step-size recommendation.

TEST(RecommendedHyperparamsTest, Examples) {
  SmoothnessProfile p;
  p.beta_w = 2.0;
  p.mu = 1.0;
  p.beta_theta = 1.0;
  p.beta_theta_w = 1.0;
  const PrivacyBudget budget{1.0, 1e-5};
  const Hyperparams h = RecommendedHyperparams(p, budget, 1000, 100, 1.0);
  EXPECT_DOUBLE_EQ(h.eta_w, 0.5);
  EXPECT_DOUBLE_EQ(h.eta_theta, 1.0 / 64.0);

  SmoothnessProfile q = p;
  q.mu = 1.5;
  EXPECT_GT(RecommendedHyperparams(q, budget, 1000, 100, 1.0).eta_theta, h.eta_theta);

  p.delta_phi = 0.0;
  EXPECT_EQ(RecommendedHyperparams(p, budget, 1000, 100, 0.0).iterations,
            MinIterations(1000, 100, 1.0));
}

TEST(RecommendedHyperparamsTest, IterationFormula) {
  SmoothnessProfile p;
  p.lipschitz_theta = 2.0;
  p.lipschitz_w = 3.0;
  p.beta_theta = 1.5;
  p.beta_w = 4.0;
  p.beta_theta_w = 0.5;
  p.mu = 0.5;
  p.delta_phi = 2.0;
  p.d_theta = 9;
  p.d_w = 4;
  // kappa_w = 8, kappa_theta_w = 1, coupled = 2; scale = sqrt(8 (4 + 0.25 D^2)).
  const double d = 2.0;
  const double scale = std::sqrt(8.0 * (2.0 * 2.0 + 0.25 * d * d));
  const double per_theta = 1.0 / (2.0 * 3.0);
  const double per_w = 4.0 / (0.5 * 3.0 * std::sqrt(8.0 * 4.0));
  const double raw = scale * 2.0 * 5000.0 * std::min(per_theta, per_w);
  const Hyperparams h = RecommendedHyperparams(p, {2.0, 1e-5}, 5000, 50, d);
  EXPECT_EQ(h.iterations,
            std::max<int64_t>(MinIterations(5000, 50, 2.0), std::ceil(raw)));
  EXPECT_DOUBLE_EQ(h.eta_theta, 1.0 / (16.0 * 8.0 * 2.0));
  p.mu = 5.0;  // kappa_w < 1
  EXPECT_THROW(RecommendedHyperparams(p, {2.0, 1e-5}, 5000, 50, d), Error);
}

// ---------------------------------------------------------------------------
// Stationarity gap.

TEST(StationarityGapTest, LambdaZeroIsLossGradientNorm) {
  const TabularDataset ds = RandomDataset(30, 3, 3, 2, 50);
  const ModelParams theta = RandomParams(3, 3, 51);
  EXPECT_DOUBLE_EQ(StationarityGap(theta, ds, 0.0, ComputeSensitiveStats(ds)),
                   EmpiricalLossGrad(theta, ds).norm());
}

TEST(StationarityGapTest, MatchesFiniteDifferenceOfEnvelope) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const TabularDataset ds = RandomDataset(25, 3, 2 + seed % 2, 2, 60 + seed, 1.0, true);
    const SensitiveStats stats = ComputeSensitiveStats(ds);
    const ModelParams theta = RandomParams(ds.num_labels(), 3, 70 + seed, 0.5);
    const double lambda = 0.5 + 0.25 * seed;
    const Eigen::VectorXd fd = NumericGradient(
        [&](const Eigen::VectorXd& v) {
          const ModelParams p(v, ds.num_labels(), 3);
          return EmpiricalLoss(p, ds) + lambda * ErmiSoft(p, ds, stats);
        },
        theta.flat());
    EXPECT_NEAR(StationarityGap(theta, ds, lambda, stats), fd.norm(), 1e-4 * fd.norm());

    const DualStack eo = MakeDualStack(ds, FairnessNotion::kEqualizedOdds, 1.0);
    const Eigen::VectorXd fd_eo = NumericGradient(
        [&](const Eigen::VectorXd& v) {
          const ModelParams p(v, ds.num_labels(), 3);
          return EmpiricalLoss(p, ds) + lambda * StackErmiSoft(p, ds, eo);
        },
        theta.flat());
    EXPECT_NEAR(StationarityGap(theta, ds, lambda, eo), fd_eo.norm(), 1e-4 * fd_eo.norm());
  }
}

TEST(StationarityGapTest, SmallAtLongRunMinimizer) {
  // Plain descent on the finite-difference gradient of L + lambda ERMI_soft.
  const TabularDataset ds = RandomDataset(20, 2, 2, 2, 80);
  const SensitiveStats stats = ComputeSensitiveStats(ds);
  const double lambda = 0.1;
  const auto objective = [&](const Eigen::VectorXd& v) {
    const ModelParams p(v, 2, 2);
    return EmpiricalLoss(p, ds) + lambda * ErmiSoft(p, ds, stats);
  };
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(6);
  for (int t = 0; t < 20000; ++t) {
    const Eigen::VectorXd g = NumericGradient(objective, theta);
    if (g.norm() < 1e-7) break;
    theta -= 0.5 * g;
  }
  EXPECT_LE(StationarityGap(ModelParams(theta, 2, 2), ds, lambda, stats), 1e-4);
}

// ---------------------------------------------------------------------------
// Smoothness probe and trace output.

TEST(EstimateSmoothnessTest, ProducesAValidProfile) {
  const TabularDataset ds = RandomDataset(50, 3, 2, 2, 90);
  SmoothnessProbeOptions opt;
  opt.probes = 20;
  const SmoothnessProfile p =
      EstimateSmoothness(ds, {1.0, FairnessNotion::kDemographicParity}, 1.0, opt);
  EXPECT_NO_THROW(p.Validate());
  EXPECT_EQ(p.d_theta, 8);
  EXPECT_EQ(p.d_w, 4);
  EXPECT_GT(p.delta_phi, 0.0);
  EXPECT_THROW(EstimateSmoothness(ds, {0.0, FairnessNotion::kDemographicParity}, 1.0, opt),
               Error);
}

TEST(TraceTest, JsonLines) {
  const std::vector<TraceRecord> trace = {{0, 1.5, 2.0, 3.0}, {10, -0.5, 0.25, 0.0}};
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "dpfermi_trace_test.jsonl";
  WriteTraceJsonl(trace, path);
  std::ifstream in(path);
  std::string line;
  int count = 0;
  while (std::getline(in, line)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("iteration").get<int64_t>(), trace[count].iteration);
    EXPECT_EQ(j.at("objective").get<double>(), trace[count].objective);
    EXPECT_EQ(j.at("grad_theta_norm").get<double>(), trace[count].grad_theta_norm);
    EXPECT_EQ(j.at("grad_w_norm").get<double>(), trace[count].grad_w_norm);
    ++count;
  }
  EXPECT_EQ(count, 2);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace dpfermi
