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

#include "dpfermi/harness.h"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

#include "dpfermi/error.h"
#include "dpfermi/random.h"

namespace dpfermi {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed-path tags under the master seed.
constexpr uint64_t kSplitTag = 0;
constexpr uint64_t kTrainTag = 1;

constexpr const char* kRecordHeader =
    "dataset_id,seed,epsilon,delta,lambda,notion,T,m,sigma_theta_sq,"
    "sigma_w_sq,train_error,test_error,dp_violation,eo_violation,ermi_hard,"
    "status";

std::string FormatReal(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

template <typename F>
double OrNaN(F&& f) {
  try {
    return f();
  } catch (const Error&) {
    return kNaN;
  }
}

void WriteText(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::kIo,
                "cannot open " + path.string() + ": " + std::strerror(errno));
  }
  out << text;
  out.flush();
  if (!out) {
    throw Error(ErrorCode::kIo,
                "write failed for " + path.string() + ": " +
                    std::strerror(errno));
  }
}

Summary Summarize(const std::vector<double>& values) {
  Summary s;
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    sum += v;
    ++s.count;
  }
  if (s.count == 0) return {kNaN, kNaN, 0};
  s.mean = sum / s.count;
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : values) {
      if (std::isfinite(v)) ss += (v - s.mean) * (v - s.mean);
    }
    s.stddev = std::sqrt(ss / (s.count - 1));
  }
  return s;
}

std::vector<double> AverageRanks(std::span<const double> v) {
  std::vector<int> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

void SyntheticSpec::Validate() const {
  if (n < 1 || k < 2 || l < 2 || d_x < l) {
    throw Error(ErrorCode::kInvalidArgument,
                "synthetic spec needs n >= 1, k >= 2, l >= 2 and d_x >= l");
  }
  if (!(bias >= 0.0 && bias <= 1.0) || !(flip_scale >= 0.0 && flip_scale <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "bias and flip_scale must lie in [0, 1]");
  }
  if (!(feature_noise >= 0.0) || !std::isfinite(feature_noise) ||
      !std::isfinite(separation)) {
    throw Error(ErrorCode::kInvalidArgument,
                "feature noise must be nonnegative and finite");
  }
}

TabularDataset SynthDataset(const SyntheticSpec& spec) {
  spec.Validate();
  Rng rng(spec.seed);
  std::uniform_int_distribution<int> group(0, spec.k - 1);
  std::uniform_int_distribution<int> label(0, spec.l - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double flip = spec.flip_scale * spec.bias;
  const int proxy_end = std::min(spec.d_x, spec.l + spec.k);

  RowMatrix x(spec.n, spec.d_x);
  std::vector<int> y(spec.n);
  std::vector<int> s(spec.n);
  for (int i = 0; i < spec.n; ++i) {
    s[i] = group(rng);
    const int clean = label(rng);
    y[i] = unit(rng) < flip ? s[i] % spec.l : clean;
    for (int p = 0; p < spec.d_x; ++p) {
      const double z = normal(rng);
      if (p < spec.l) {
        x(i, p) = (p == clean ? spec.separation : 0.0) + spec.feature_noise * z;
      } else if (p < proxy_end) {
        x(i, p) = (p - spec.l == s[i] ? 1.0 : 0.0) + spec.feature_noise * z;
      } else {
        x(i, p) = z;
      }
    }
  }

  Encoding enc;
  for (int p = 0; p < spec.d_x; ++p) enc.feature_names.push_back("x" + std::to_string(p));
  for (int j = 0; j < spec.l; ++j) enc.label_values.push_back(std::to_string(j));
  for (int r = 0; r < spec.k; ++r) enc.sensitive_values.push_back(std::to_string(r));
  return TabularDataset(std::move(x), std::move(y), std::move(s), spec.l,
                        spec.k, std::move(enc));
}

PreparedRun PrepareRun(const TabularDataset& train,
                       const RunSettings& settings) {
  if (settings.epochs < 1) {
    throw Error(ErrorCode::kInvalidArgument, "epochs must be positive");
  }
  PreparedRun run;
  run.sgda = settings.sgda;
  const int64_t n = train.size();
  const int64_t m = std::min<int64_t>(settings.sgda.batch_size, n);
  run.sgda.batch_size = static_cast<int>(m);
  run.sgda.iterations = settings.epochs * ((n + m - 1) / m);
  run.sgda.Validate();

  run.rho = ComputeSensitiveStats(train).rho;
  run.lipschitz_theta = settings.lipschitz_theta.value_or(
      SoftmaxLipschitzBound(train.features()));
  run.noise = Calibrate(settings.granularity, settings.budget,
                        run.sgda.iterations, n, run.rho, run.lipschitz_theta,
                        run.sgda.box_radius, train.num_labels());
  if (settings.granularity != PrivacyGranularity::kNone) {
    const int64_t t_min = MinIterations(n, m, settings.budget.epsilon);
    if (run.sgda.iterations < t_min) {
      throw Error(ErrorCode::kCalibration,
                  "T = " + std::to_string(run.sgda.iterations) +
                      " is below the minimum " + std::to_string(t_min) +
                      " for n = " + std::to_string(n) + ", m = " +
                      std::to_string(m) + "; raise --epochs or lower " +
                      "--batch-size");
    }
  }
  return run;
}

Metrics Evaluate(const ModelParams& model, const TabularDataset& ds) {
  const std::vector<int> preds = PredictLabels(model, ds);
  const int l = ds.num_labels();
  const int k = ds.num_groups();
  Metrics m;
  m.error = ErrorRate(preds, ds.labels());
  m.dp_violation =
      OrNaN([&] { return DpViolation(preds, ds.sensitive(), l, k); });
  m.eo_violation = OrNaN(
      [&] { return EoViolation(preds, ds.sensitive(), ds.labels(), l, k); });
  m.ermi_hard = OrNaN([&] { return ErmiHard(preds, ds.sensitive(), l, k); });
  return m;
}

void ExperimentConfig::Validate() const {
  if (lambdas.empty() || epsilons.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty lambda or epsilon grid");
  }
  for (double l : lambdas) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw Error(ErrorCode::kInvalidArgument, "lambda values must be >= 0");
    }
  }
  for (double e : epsilons) {
    if (!(e > 0.0) || !std::isfinite(e)) {
      throw Error(ErrorCode::kInvalidArgument, "epsilon values must be > 0");
    }
  }
  if (trials < 1) {
    throw Error(ErrorCode::kInvalidArgument, "trials must be >= 1");
  }
  if (threads < 1) {
    throw Error(ErrorCode::kInvalidArgument, "threads must be >= 1");
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "test fraction must lie in (0, 1)");
  }
}

std::vector<TradeoffRecord> RunSweep(const ExperimentConfig& config) {
  config.Validate();

  std::vector<std::pair<TabularDataset, TabularDataset>> splits;
  splits.reserve(config.trials);
  std::optional<TabularDataset> loaded;
  if (const auto* csv = std::get_if<CsvSource>(&config.source)) {
    loaded = LoadCsv(csv->path, csv->schema);
  }
  for (int t = 0; t < config.trials; ++t) {
    const uint64_t split_seed = DeriveSeed(
        config.master_seed, {kSplitTag, static_cast<uint64_t>(t)});
    if (loaded) {
      splits.push_back(TrainTestSplit(*loaded, config.test_fraction, split_seed));
    } else {
      SyntheticSpec spec = std::get<SyntheticSpec>(config.source);
      spec.seed = DeriveSeed(spec.seed, {static_cast<uint64_t>(t)});
      splits.push_back(
          TrainTestSplit(SynthDataset(spec), config.test_fraction, split_seed));
    }
  }

  const size_t num_eps = config.epsilons.size();
  const size_t num_lambda = config.lambdas.size();
  const size_t trials = static_cast<size_t>(config.trials);
  const size_t cells = num_eps * num_lambda * trials;
  std::vector<TradeoffRecord> records(cells);

  const auto run_cell = [&](size_t c) {
    const size_t t = c % trials;
    const size_t j = (c / trials) % num_lambda;
    const size_t i = c / (trials * num_lambda);
    const auto& [train, test] = splits[t];

    RunSettings settings = config.run;
    settings.fermi.lambda = config.lambdas[j];
    settings.fermi.notion = config.notion;
    settings.budget.epsilon = config.epsilons[i];
    settings.budget.delta = config.delta;
    settings.sgda.seed = DeriveSeed(config.master_seed, {kTrainTag, i, j, t});
    const PreparedRun run = PrepareRun(train, settings);

    TradeoffRecord& r = records[c];
    r.dataset_id = config.dataset_id;
    r.seed = settings.sgda.seed;
    r.epsilon = settings.budget.epsilon;
    r.delta = settings.budget.delta;
    r.lambda = settings.fermi.lambda;
    r.notion = settings.fermi.notion;
    r.iterations = run.sgda.iterations;
    r.batch_size = run.sgda.batch_size;
    r.sigma_theta_sq = run.noise.sigma_theta_sq;
    r.sigma_w_sq = run.noise.sigma_w_sq;
    try {
      const FermiTrainResult result = DpFermiTrain(
          train, ModelParams(train.num_labels(), train.num_features()),
          settings.fermi, run.sgda, run.noise, {settings.noise_placement});
      const Metrics on_train = Evaluate(result.model, train);
      const Metrics on_test = Evaluate(result.model, test);
      r.train_error = on_train.error;
      r.test_error = on_test.error;
      r.dp_violation = on_test.dp_violation;
      r.eo_violation = on_test.eo_violation;
      r.ermi_hard = on_test.ermi_hard;
      r.status = "ok";
    } catch (const DivergenceError& e) {
      r.train_error = r.test_error = kNaN;
      r.dp_violation = r.eo_violation = r.ermi_hard = kNaN;
      r.status = "diverged@" + std::to_string(e.iteration());
    }
  };

  const int workers =
      static_cast<int>(std::min<size_t>(config.threads, cells));
  if (workers <= 1) {
    for (size_t c = 0; c < cells; ++c) run_cell(c);
    return records;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t c = next++; c < cells; c = next++) {
        try {
          run_cell(c);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
          next = cells;
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return records;
}

std::vector<AggregateRecord> Aggregate(
    std::span<const TradeoffRecord> records) {
  if (records.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "nothing to aggregate");
  }
  const auto key = [](const TradeoffRecord& r) {
    return std::tie(r.dataset_id, r.notion, r.epsilon, r.delta, r.lambda);
  };
  std::vector<std::vector<const TradeoffRecord*>> groups;
  for (const TradeoffRecord& r : records) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
      return key(*g.front()) == key(r);
    });
    if (it == groups.end()) {
      groups.push_back({&r});
    } else {
      it->push_back(&r);
    }
  }

  std::vector<AggregateRecord> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    AggregateRecord a;
    const TradeoffRecord& first = *g.front();
    a.dataset_id = first.dataset_id;
    a.notion = first.notion;
    a.epsilon = first.epsilon;
    a.delta = first.delta;
    a.lambda = first.lambda;
    a.runs = static_cast<int>(g.size());
    for (const TradeoffRecord* r : g) {
      if (r->status != "ok") ++a.diverged;
    }
    const auto column = [&](auto field) {
      std::vector<double> v;
      v.reserve(g.size());
      for (const TradeoffRecord* r : g) v.push_back(static_cast<double>(r->*field));
      return Summarize(v);
    };
    a.iterations = column(&TradeoffRecord::iterations);
    a.batch_size = column(&TradeoffRecord::batch_size);
    a.sigma_theta_sq = column(&TradeoffRecord::sigma_theta_sq);
    a.sigma_w_sq = column(&TradeoffRecord::sigma_w_sq);
    a.train_error = column(&TradeoffRecord::train_error);
    a.test_error = column(&TradeoffRecord::test_error);
    a.dp_violation = column(&TradeoffRecord::dp_violation);
    a.eo_violation = column(&TradeoffRecord::eo_violation);
    a.ermi_hard = column(&TradeoffRecord::ermi_hard);
    out.push_back(std::move(a));
  }
  return out;
}

std::string RecordsCsv(std::span<const TradeoffRecord> records) {
  std::ostringstream out;
  out << kRecordHeader << '\n';
  for (const TradeoffRecord& r : records) {
    out << CsvQuote(r.dataset_id) << ',' << r.seed << ','
        << FormatReal(r.epsilon) << ',' << FormatReal(r.delta) << ','
        << FormatReal(r.lambda) << ',' << NotionName(r.notion) << ','
        << r.iterations << ',' << r.batch_size << ','
        << FormatReal(r.sigma_theta_sq) << ',' << FormatReal(r.sigma_w_sq)
        << ',' << FormatReal(r.train_error) << ','
        << FormatReal(r.test_error) << ',' << FormatReal(r.dp_violation)
        << ',' << FormatReal(r.eo_violation) << ','
        << FormatReal(r.ermi_hard) << ',' << CsvQuote(r.status) << '\n';
  }
  return out.str();
}

std::string AggregatesCsv(std::span<const AggregateRecord> aggregates) {
  static constexpr const char* kColumns[] = {
      "T", "m", "sigma_theta_sq", "sigma_w_sq", "train_error", "test_error",
      "dp_violation", "eo_violation", "ermi_hard"};
  std::ostringstream out;
  out << "dataset_id,notion,epsilon,delta,lambda,runs,diverged";
  for (const char* c : kColumns) out << ',' << c << "_mean," << c << "_std";
  out << '\n';
  for (const AggregateRecord& a : aggregates) {
    out << CsvQuote(a.dataset_id) << ',' << NotionName(a.notion) << ','
        << FormatReal(a.epsilon) << ',' << FormatReal(a.delta) << ','
        << FormatReal(a.lambda) << ',' << a.runs << ',' << a.diverged;
    for (const Summary* s :
         {&a.iterations, &a.batch_size, &a.sigma_theta_sq, &a.sigma_w_sq,
          &a.train_error, &a.test_error, &a.dp_violation, &a.eo_violation,
          &a.ermi_hard}) {
      out << ',' << FormatReal(s->mean) << ',' << FormatReal(s->stddev);
    }
    out << '\n';
  }
  return out.str();
}

void WriteRecordsCsv(std::span<const TradeoffRecord> records,
                     const std::filesystem::path& path) {
  WriteText(RecordsCsv(records), path);
}

void WriteAggregatesCsv(std::span<const AggregateRecord> aggregates,
                        const std::filesystem::path& path) {
  WriteText(AggregatesCsv(aggregates), path);
}

std::vector<TradeoffRecord> ReadRecordsCsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo,
                "cannot open " + path.string() + ": " + std::strerror(errno));
  }
  std::string line;
  if (!std::getline(in, line) || line != kRecordHeader) {
    throw Error(ErrorCode::kSchema,
                path.string() + " does not start with the record header");
  }
  std::vector<TradeoffRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = SplitCsvLine(line);
    if (f.size() != 16) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) +
                                         ": expected 16 fields");
    }
    try {
      TradeoffRecord r;
      r.dataset_id = f[0];
      r.seed = std::stoull(f[1]);
      r.epsilon = std::stod(f[2]);
      r.delta = std::stod(f[3]);
      r.lambda = std::stod(f[4]);
      r.notion = ParseNotion(f[5]);
      r.iterations = std::stoll(f[6]);
      r.batch_size = std::stoll(f[7]);
      r.sigma_theta_sq = std::stod(f[8]);
      r.sigma_w_sq = std::stod(f[9]);
      r.train_error = std::stod(f[10]);
      r.test_error = std::stod(f[11]);
      r.dp_violation = std::stod(f[12]);
      r.eo_violation = std::stod(f[13]);
      r.ermi_hard = std::stod(f[14]);
      r.status = f[15];
      records.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) +
                                         ": malformed numeric field");
    }
  }
  return records;
}

double SpearmanCorrelation(std::span<const double> x,
                           std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "Spearman correlation needs two equal-length samples of size "
                ">= 2");
  }
  const std::vector<double> rx = AverageRanks(x);
  const std::vector<double> ry = AverageRanks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw Error(ErrorCode::kInvalidArgument,
                "Spearman correlation is undefined for a constant sample");
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace dpfermi
