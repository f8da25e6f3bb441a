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

// Command-line front end: train, sweep, calibrate, audit-sensitivity,
// evaluate, synth and probe-smoothness.
//
// Exit codes: 0 success, 2 configuration or input error, 3 divergence in a
// single train run.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpfermi/classifier.h"
#include "dpfermi/dataset.h"
#include "dpfermi/error.h"
#include "dpfermi/fairness.h"
#include "dpfermi/harness.h"
#include "dpfermi/optimizer.h"
#include "dpfermi/privacy.h"
#include "dpfermi/random.h"

namespace {

using namespace dpfermi;

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

// Flags shared by the subcommands that read a dataset.
struct DataFlags {
  std::string dataset = "synth";
  std::string label_col = "y";
  std::string sensitive_col = "s";
  double test_fraction = 0.2;
  SyntheticSpec synth;
};

struct TrainFlags {
  std::string notion = "dp";
  double epsilon = 1.0;
  double delta = 1e-5;
  double lambda = 0.0;
  double eta_theta = 0.01;
  double eta_w = 0.01;
  int64_t epochs = 200;
  int batch_size = 1024;
  double box_radius = 1.0;
  std::optional<double> clip;
  std::string granularity = "sensitive";
  std::string noise_placement = "inside";
  std::optional<double> lipschitz;
  uint64_t seed = 0;
};

void AddDataFlags(CLI::App* app, DataFlags& f) {
  app->add_option("--dataset", f.dataset,
                  "CSV file, or 'synth' for generated data")
      ->capture_default_str();
  app->add_option("--label-col", f.label_col, "Label column")
      ->capture_default_str();
  app->add_option("--sensitive-col", f.sensitive_col,
                  "Sensitive attribute column")
      ->capture_default_str();
  app->add_option("--test-fraction", f.test_fraction, "Held-out fraction")
      ->capture_default_str();
  app->add_option("--n", f.synth.n, "Synthetic: rows")->capture_default_str();
  app->add_option("--dx", f.synth.d_x, "Synthetic: features")
      ->capture_default_str();
  app->add_option("--k", f.synth.k, "Synthetic: groups")->capture_default_str();
  app->add_option("--l", f.synth.l, "Synthetic: classes")->capture_default_str();
  app->add_option("--bias", f.synth.bias, "Synthetic: label bias in [0,1]")
      ->capture_default_str();
  app->add_option("--feature-noise", f.synth.feature_noise,
                  "Synthetic: feature noise scale")
      ->capture_default_str();
  app->add_option("--separation", f.synth.separation,
                  "Synthetic: class mean separation")
      ->capture_default_str();
  app->add_option("--flip-scale", f.synth.flip_scale,
                  "Synthetic: label flip probability at bias 1")
      ->capture_default_str();
  app->add_option("--synth-seed", f.synth.seed, "Synthetic: generator seed")
      ->capture_default_str();
}

void AddTrainFlags(CLI::App* app, TrainFlags& f, bool grids) {
  app->add_option("--notion", f.notion, "Fairness notion")
      ->check(CLI::IsMember({"dp", "eo"}))
      ->capture_default_str();
  if (!grids) {
    app->add_option("--epsilon", f.epsilon, "Privacy epsilon")
        ->capture_default_str();
    app->add_option("--lambda", f.lambda, "Fairness weight")
        ->capture_default_str();
  }
  app->add_option("--delta", f.delta, "Privacy delta")->capture_default_str();
  app->add_option("--eta-theta", f.eta_theta, "Descent step size")
      ->capture_default_str();
  app->add_option("--eta-w", f.eta_w, "Ascent step size")
      ->capture_default_str();
  app->add_option("--epochs", f.epochs, "Epochs; T = epochs * ceil(n/m)")
      ->capture_default_str();
  app->add_option("--batch-size", f.batch_size, "Minibatch size m")
      ->capture_default_str();
  app->add_option("--box-radius", f.box_radius, "Dual box radius D")
      ->capture_default_str();
  app->add_option("--clip", f.clip, "Per-sample loss-gradient clip norm");
  app->add_option("--granularity", f.granularity, "Privacy granularity")
      ->check(CLI::IsMember({"sensitive", "all", "none"}))
      ->capture_default_str();
  app->add_option("--noise-placement", f.noise_placement,
                  "Scale the theta noise by lambda (inside) or not (outside)")
      ->check(CLI::IsMember({"inside", "outside"}))
      ->capture_default_str();
  app->add_option("--lipschitz", f.lipschitz,
                  "Override the Lipschitz constant of F in theta");
  app->add_option("--seed", f.seed, "Master seed")->capture_default_str();
}

TabularDataset LoadData(const DataFlags& f) {
  if (f.dataset == "synth") return SynthDataset(f.synth);
  return LoadCsv(f.dataset, CsvSchema{f.label_col, f.sensitive_col});
}

RunSettings ToSettings(const TrainFlags& f) {
  RunSettings s;
  s.fermi.lambda = f.lambda;
  s.fermi.notion = ParseNotion(f.notion);
  s.budget.epsilon = f.epsilon;
  s.budget.delta = f.delta;
  s.granularity = ParseGranularity(f.granularity);
  s.sgda.eta_theta = f.eta_theta;
  s.sgda.eta_w = f.eta_w;
  s.sgda.batch_size = f.batch_size;
  s.sgda.box_radius = f.box_radius;
  s.sgda.clip_theta = f.clip;
  s.sgda.seed = f.seed;
  s.epochs = f.epochs;
  s.lipschitz_theta = f.lipschitz;
  s.noise_placement = f.noise_placement == "inside"
                          ? NoisePlacement::kInsideLambda
                          : NoisePlacement::kOutsideLambda;
  return s;
}

void PrintMetrics(const char* prefix, const Metrics& m) {
  std::printf("%s_error=%.6g\n%s_dp_violation=%.6g\n%s_eo_violation=%.6g\n"
              "%s_ermi_hard=%.6g\n",
              prefix, m.error, prefix, m.dp_violation, prefix, m.eo_violation,
              prefix, m.ermi_hard);
}

int RunTrain(const DataFlags& data, const TrainFlags& flags,
             const std::string& out, const std::string& trace,
             int64_t trace_every) {
  const TabularDataset ds = LoadData(data);
  auto [train, test] = TrainTestSplit(ds, data.test_fraction,
                                      DeriveSeed(flags.seed, {0}));
  RunSettings settings = ToSettings(flags);
  settings.sgda.trace_every = trace.empty() ? 0 : std::max<int64_t>(1, trace_every);
  const PreparedRun run = PrepareRun(train, settings);
  std::printf("T=%lld\nm=%d\nsigma_theta_sq=%.6g\nsigma_w_sq=%.6g\n",
              static_cast<long long>(run.sgda.iterations), run.sgda.batch_size,
              run.noise.sigma_theta_sq, run.noise.sigma_w_sq);
  const FermiTrainResult result = DpFermiTrain(
      train, ModelParams(train.num_labels(), train.num_features()),
      settings.fermi, run.sgda, run.noise, {settings.noise_placement});
  PrintMetrics("train", Evaluate(result.model, train));
  PrintMetrics("test", Evaluate(result.model, test));
  if (!out.empty()) SaveCheckpoint({result.model, ds.encoding()}, out);
  if (!trace.empty()) WriteTraceJsonl(result.trace, trace);
  return 0;
}

int RunSweepCommand(const DataFlags& data, const TrainFlags& flags,
                    const std::vector<double>& epsilons,
                    const std::vector<double>& lambdas, int trials,
                    int threads, bool deterministic, const std::string& out,
                    const std::string& aggregate_out) {
  ExperimentConfig config;
  if (data.dataset == "synth") {
    config.dataset_id = "synthetic";
    config.source = data.synth;
  } else {
    config.dataset_id = data.dataset;
    config.source = CsvSource{data.dataset, {data.label_col, data.sensitive_col}};
  }
  config.test_fraction = data.test_fraction;
  config.notion = ParseNotion(flags.notion);
  config.epsilons = epsilons;
  config.lambdas = lambdas;
  config.delta = flags.delta;
  config.trials = trials;
  config.run = ToSettings(flags);
  config.master_seed = flags.seed;
  config.threads = deterministic ? 1 : threads;
  const std::vector<TradeoffRecord> records = RunSweep(config);
  if (out.empty()) {
    std::cout << RecordsCsv(records);
  } else {
    WriteRecordsCsv(records, out);
  }
  if (!aggregate_out.empty()) {
    WriteAggregatesCsv(Aggregate(records), aggregate_out);
  }
  return 0;
}

int RunCalibrate(const DataFlags& data, const TrainFlags& flags,
                 const std::vector<double>& epsilons) {
  const TabularDataset ds = LoadData(data);
  const TabularDataset train =
      TrainTestSplit(ds, data.test_fraction, DeriveSeed(flags.seed, {0})).first;
  std::printf(
      "epsilon,delta,T,T_min,n,m,rho,lipschitz_theta,sigma_theta_sq,"
      "sigma_w_sq,delta_theta,delta_w\n");
  for (double eps : epsilons) {
    TrainFlags f = flags;
    f.epsilon = eps;
    const PreparedRun run = PrepareRun(train, ToSettings(f));
    const SensitivityBounds b =
        ComputeSensitivityBounds(run.sgda.box_radius, run.lipschitz_theta,
                                 run.sgda.batch_size, run.rho);
    std::printf("%.6g,%.6g,%lld,%lld,%d,%d,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n",
                eps, f.delta, static_cast<long long>(run.sgda.iterations),
                static_cast<long long>(
                    MinIterations(train.size(), run.sgda.batch_size, eps)),
                train.size(), run.sgda.batch_size, run.rho,
                run.lipschitz_theta, run.noise.sigma_theta_sq,
                run.noise.sigma_w_sq, b.delta_theta, b.delta_w);
  }
  return 0;
}

int RunAudit(const DataFlags& data, const TrainFlags& flags, int trials,
             double theta_scale) {
  const TabularDataset ds = LoadData(data);
  Rng rng(DeriveSeed(flags.seed, {2}));
  std::normal_distribution<double> normal(0.0, theta_scale);
  std::uniform_real_distribution<double> box(-flags.box_radius,
                                             flags.box_radius);
  ModelParams theta(ds.num_labels(), ds.num_features());
  for (int i = 0; i < theta.dim(); ++i) theta.mutable_flat()[i] = normal(rng);
  Eigen::MatrixXd w(ds.num_groups(), ds.num_labels());
  for (int i = 0; i < w.size(); ++i) w.data()[i] = box(rng);

  AuditOptions options;
  options.batch_size = flags.batch_size;
  options.trials = trials;
  const AuditResult result = EmpiricalSensitivityAudit(theta, w, ds, options, rng);
  const double lipschitz =
      flags.lipschitz.value_or(SoftmaxLipschitzBound(ds.features()));
  const SensitivityBounds bound = ComputeSensitivityBounds(
      flags.box_radius, lipschitz, flags.batch_size,
      ComputeSensitiveStats(ds).rho);
  std::printf("trials_run=%d\nflips_skipped=%d\n", result.trials_run,
              result.flips_skipped);
  std::printf("observed_delta_theta=%.6g\nbound_delta_theta=%.6g\n",
              result.max_observed.delta_theta, bound.delta_theta);
  std::printf("observed_delta_w=%.6g\nbound_delta_w=%.6g\n",
              result.max_observed.delta_w, bound.delta_w);
  return 0;
}

int RunEvaluate(const DataFlags& data, const std::string& checkpoint) {
  const Checkpoint ckpt = LoadCheckpoint(checkpoint);
  const TabularDataset ds =
      LoadCsv(data.dataset, CsvSchema{data.label_col, data.sensitive_col},
              ckpt.encoding);
  PrintMetrics("eval", Evaluate(ckpt.params, ds));
  return 0;
}

int RunProbe(const DataFlags& data, const TrainFlags& flags, int probes) {
  const TabularDataset ds = LoadData(data);
  const RunSettings settings = ToSettings(flags);
  SmoothnessProbeOptions options;
  options.probes = probes;
  options.seed = flags.seed;
  const SmoothnessProfile p =
      EstimateSmoothness(ds, settings.fermi, flags.box_radius, options);
  const int64_t m = std::min(flags.batch_size, ds.size());
  const double diameter = 2.0 * flags.box_radius * std::sqrt(p.d_w);
  const Hyperparams h =
      RecommendedHyperparams(p, settings.budget, ds.size(), m, diameter);
  std::printf(
      "lipschitz_theta=%.6g\nlipschitz_w=%.6g\nbeta_theta=%.6g\nbeta_w=%.6g\n"
      "beta_theta_w=%.6g\nmu=%.6g\ndelta_phi=%.6g\neta_theta=%.6g\n"
      "eta_w=%.6g\nT=%lld\n",
      p.lipschitz_theta, p.lipschitz_w, p.beta_theta, p.beta_w,
      p.beta_theta_w, p.mu, p.delta_phi, h.eta_theta, h.eta_w,
      static_cast<long long>(h.iterations));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private fair classification"};
  app.require_subcommand(1);

  DataFlags data;
  TrainFlags flags;
  std::string out;
  std::string trace;
  int64_t trace_every = 0;

  CLI::App* train = app.add_subcommand("train", "Train one model");
  AddDataFlags(train, data);
  AddTrainFlags(train, flags, false);
  train->add_option("--out", out, "Checkpoint path (JSON)");
  train->add_option("--trace", trace, "Training trace path (JSONL)");
  train->add_option("--trace-every", trace_every, "Trace interval")
      ->capture_default_str();

  std::vector<double> epsilons = {1.0};
  std::vector<double> lambdas = {0.0};
  int trials = 1;
  int threads = 1;
  bool deterministic = false;
  std::string aggregate_out;
  CLI::App* sweep = app.add_subcommand("sweep", "Run an epsilon x lambda grid");
  AddDataFlags(sweep, data);
  AddTrainFlags(sweep, flags, true);
  sweep->add_option("--epsilon", epsilons, "Epsilon grid")
      ->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--lambda", lambdas, "Lambda grid")
      ->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--trials", trials, "Seeds per cell")->capture_default_str();
  sweep->add_option("--threads", threads, "Worker threads")
      ->capture_default_str();
  sweep->add_flag("--deterministic", deterministic,
                  "Run cells sequentially on one thread");
  sweep->add_option("--out", out, "Record CSV (stdout if omitted)");
  sweep->add_option("--aggregate-out", aggregate_out,
                    "Per-cell means and standard deviations CSV");

  CLI::App* calibrate =
      app.add_subcommand("calibrate", "Print the noise calibration table");
  AddDataFlags(calibrate, data);
  AddTrainFlags(calibrate, flags, true);
  calibrate->add_option("--epsilon", epsilons, "Epsilon values")
      ->delimiter(',')
      ->capture_default_str();

  double theta_scale = 1.0;
  CLI::App* audit = app.add_subcommand(
      "audit-sensitivity", "Empirical sensitivity audit on adjacent datasets");
  AddDataFlags(audit, data);
  AddTrainFlags(audit, flags, false);
  audit->add_option("--trials", trials, "Adjacent pairs to draw")
      ->capture_default_str();
  audit->add_option("--theta-scale", theta_scale,
                    "Standard deviation of the random theta")
      ->capture_default_str();

  std::string checkpoint;
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Metrics of a checkpoint on a dataset");
  AddDataFlags(evaluate, data);
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint path")
      ->required();

  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  AddDataFlags(synth, data);
  synth->add_option("--out", out, "CSV path")->required();

  int probes = 200;
  CLI::App* probe = app.add_subcommand(
      "probe-smoothness",
      "Estimate smoothness constants and the recommended step sizes");
  AddDataFlags(probe, data);
  AddTrainFlags(probe, flags, false);
  probe->add_option("--probes", probes, "Random probe points")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return RunTrain(data, flags, out, trace, trace_every);
    if (*sweep) {
      return RunSweepCommand(data, flags, epsilons, lambdas, trials, threads,
                             deterministic, out, aggregate_out);
    }
    if (*calibrate) return RunCalibrate(data, flags, epsilons);
    if (*audit) return RunAudit(data, flags, trials, theta_scale);
    if (*evaluate) return RunEvaluate(data, checkpoint);
    if (*synth) {
      WriteCsv(SynthDataset(data.synth), out,
               CsvSchema{data.label_col, data.sensitive_col});
      return 0;
    }
    if (*probe) return RunProbe(data, flags, probes);
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
