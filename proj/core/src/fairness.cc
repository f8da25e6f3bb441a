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

#include "dpfermi/fairness.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "dpfermi/error.h"

namespace dpfermi {
namespace {

void CheckAligned(size_t a, size_t b) {
  if (a != b) {
    throw Error(ErrorCode::kInvalidArgument, "input vectors are not aligned");
  }
  if (a == 0) throw Error(ErrorCode::kEmptyDataset, "no samples");
}

void CheckRange(std::span<const int> v, int upper, const char* what) {
  for (int x : v) {
    if (x < 0 || x >= upper) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string(what) + " value out of range");
    }
  }
}

// sum_{j,r} c(j,r)^2 / (c_yhat(j) c_s(r)) over nonzero cells, i.e. ERMI + 1.
double ErmiPlusOneFromCounts(const Eigen::MatrixXd& counts) {
  const Eigen::VectorXd by_group = counts.rowwise().sum();
  const Eigen::RowVectorXd by_pred = counts.colwise().sum();
  double total = 0.0;
  for (Eigen::Index r = 0; r < counts.rows(); ++r) {
    for (Eigen::Index j = 0; j < counts.cols(); ++j) {
      const double c = counts(r, j);
      if (c > 0.0) total += c * c / (by_pred[j] * by_group[r]);
    }
  }
  return total;
}

Eigen::MatrixXd HardCounts(std::span<const int> preds,
                           std::span<const int> sensitive, int num_labels,
                           int num_groups) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(num_groups, num_labels);
  for (size_t i = 0; i < preds.size(); ++i) counts(sensitive[i], preds[i]) += 1.0;
  return counts;
}

void CheckStatsMatch(const SensitiveStats& stats, const Eigen::MatrixXd& w) {
  if (stats.num_groups() != w.rows()) {
    throw Error(ErrorCode::kInvalidArgument,
                "dual matrix rows must equal the number of groups");
  }
}

}  // namespace

std::string_view NotionName(FairnessNotion notion) {
  return notion == FairnessNotion::kEqualizedOdds ? "eo" : "dp";
}

FairnessNotion ParseNotion(std::string_view name) {
  if (name == "dp" || name == "demographic_parity") {
    return FairnessNotion::kDemographicParity;
  }
  if (name == "eo" || name == "equalized_odds") {
    return FairnessNotion::kEqualizedOdds;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown fairness notion '" + std::string(name) + "'");
}

void FermiConfig::Validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda must be finite and >= 0");
  }
}

DualMatrix DualMatrix::Zero(int num_groups, int num_labels, double box_radius) {
  if (!(box_radius > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "box radius must be positive");
  }
  return DualMatrix{Eigen::MatrixXd::Zero(num_groups, num_labels), box_radius};
}

std::vector<SensitiveStats> ConditionalSensitiveStats(const TabularDataset& ds) {
  std::vector<std::vector<int>> by_label(ds.num_labels());
  for (int i = 0; i < ds.size(); ++i) by_label[ds.label(i)].push_back(ds.group(i));
  std::vector<SensitiveStats> out;
  out.reserve(by_label.size());
  for (int y = 0; y < ds.num_labels(); ++y) {
    if (by_label[y].empty()) {
      throw Error(ErrorCode::kDegenerateConditional,
                  "label " + std::to_string(y) + " has no samples");
    }
    try {
      out.push_back(ComputeSensitiveStats(by_label[y], ds.num_groups()));
    } catch (const Error& e) {
      throw Error(ErrorCode::kDegenerateConditional,
                  "label " + std::to_string(y) + ": " + e.what());
    }
  }
  return out;
}

DualStack MakeDualStack(const TabularDataset& train, FairnessNotion notion,
                        double box_radius) {
  DualStack stack;
  stack.notion = notion;
  if (notion == FairnessNotion::kEqualizedOdds) {
    stack.stats = ConditionalSensitiveStats(train);
  } else {
    stack.stats.push_back(ComputeSensitiveStats(train));
  }
  for (size_t b = 0; b < stack.stats.size(); ++b) {
    stack.duals.push_back(
        DualMatrix::Zero(train.num_groups(), train.num_labels(), box_radius));
  }
  return stack;
}

double ErmiHard(std::span<const int> preds, std::span<const int> sensitive,
                int num_labels, int num_groups) {
  CheckAligned(preds.size(), sensitive.size());
  CheckRange(preds, num_labels, "prediction");
  CheckRange(sensitive, num_groups, "sensitive");
  const Eigen::MatrixXd counts =
      HardCounts(preds, sensitive, num_labels, num_groups);
  for (int r = 0; r < num_groups; ++r) {
    if (counts.row(r).sum() == 0.0) {
      throw Error(ErrorCode::kDegenerateGroup,
                  "sensitive group " + std::to_string(r) + " is absent");
    }
  }
  return ErmiPlusOneFromCounts(counts) - 1.0;
}

SoftJoint ComputeSoftJoint(const ModelParams& theta, const TabularDataset& ds) {
  SoftJoint out{Eigen::MatrixXd::Zero(ds.num_groups(), theta.num_labels()),
                Eigen::VectorXd::Zero(theta.num_labels())};
  for (int i = 0; i < ds.size(); ++i) {
    const Eigen::VectorXd p = PredictProba(theta, ds.x(i));
    out.joint.row(ds.group(i)) += p.transpose();
    out.marginal += p;
  }
  out.joint /= ds.size();
  out.marginal /= ds.size();
  return out;
}

double ErmiSoft(const ModelParams& theta, const TabularDataset& ds,
                const SensitiveStats& stats) {
  if (stats.num_groups() != ds.num_groups()) {
    throw Error(ErrorCode::kInvalidArgument, "stats do not match dataset");
  }
  const SoftJoint sj = ComputeSoftJoint(theta, ds);
  double total = 0.0;
  for (int r = 0; r < ds.num_groups(); ++r) {
    for (int j = 0; j < theta.num_labels(); ++j) {
      const double pj = sj.joint(r, j);
      if (pj > 0.0) total += pj * pj / (sj.marginal[j] * stats.probabilities[r]);
    }
  }
  return total - 1.0;
}

double ErmiConditional(std::span<const int> preds,
                       std::span<const int> sensitive,
                       std::span<const int> labels, int num_labels,
                       int num_groups) {
  CheckAligned(preds.size(), sensitive.size());
  CheckAligned(preds.size(), labels.size());
  CheckRange(preds, num_labels, "prediction");
  CheckRange(sensitive, num_groups, "sensitive");
  CheckRange(labels, num_labels, "label");
  std::vector<Eigen::MatrixXd> counts(
      num_labels, Eigen::MatrixXd::Zero(num_groups, num_labels));
  for (size_t i = 0; i < preds.size(); ++i) {
    counts[labels[i]](sensitive[i], preds[i]) += 1.0;
  }
  const double n = static_cast<double>(preds.size());
  double total = 0.0;
  for (int y = 0; y < num_labels; ++y) {
    const double n_y = counts[y].sum();
    if (n_y == 0.0) continue;
    for (int r = 0; r < num_groups; ++r) {
      if (counts[y].row(r).sum() == 0.0) {
        throw Error(ErrorCode::kDegenerateConditional,
                    "group " + std::to_string(r) + " absent given label " +
                        std::to_string(y));
      }
    }
    total += (n_y / n) * ErmiPlusOneFromCounts(counts[y]);
  }
  return total - 1.0;
}

double ErmiConditionalSoft(const ModelParams& theta, const TabularDataset& ds,
                           const std::vector<SensitiveStats>& cond_stats) {
  if (static_cast<int>(cond_stats.size()) != ds.num_labels()) {
    throw Error(ErrorCode::kInvalidArgument,
                "need one conditional stats object per label");
  }
  std::vector<std::vector<int>> rows(ds.num_labels());
  for (int i = 0; i < ds.size(); ++i) rows[ds.label(i)].push_back(i);
  double total = 0.0;
  for (int y = 0; y < ds.num_labels(); ++y) {
    if (rows[y].empty()) continue;
    const TabularDataset sub = ds.Subset(rows[y]);
    const double weight = static_cast<double>(rows[y].size()) / ds.size();
    total += weight * (ErmiSoft(theta, sub, cond_stats[y]) + 1.0);
  }
  return total - 1.0;
}

double PsiFromProba(const Eigen::VectorXd& probs, const Eigen::MatrixXd& w,
                    int s, const SensitiveStats& stats) {
  CheckStatsMatch(stats, w);
  const double quadratic = w.colwise().squaredNorm().dot(probs.transpose());
  const double coupling = 2.0 * stats.inv_sqrt[s] * w.row(s).dot(probs.transpose());
  return -quadratic + coupling - 1.0;
}

double Psi(const ModelParams& theta, const Eigen::MatrixXd& w,
           const FeatureVector& x, int s, const SensitiveStats& stats) {
  return PsiFromProba(PredictProba(theta, x), w, s, stats);
}

void AddPsiGradWFromProba(const Eigen::VectorXd& probs,
                          const Eigen::MatrixXd& w, int s,
                          const SensitiveStats& stats, double scale,
                          Eigen::MatrixXd& out) {
  out.noalias() -= (2.0 * scale) * (w * probs.asDiagonal());
  out.row(s) += (2.0 * scale * stats.inv_sqrt[s]) * probs.transpose();
}

Eigen::MatrixXd PsiGradW(const ModelParams& theta, const Eigen::MatrixXd& w,
                         const FeatureVector& x, int s,
                         const SensitiveStats& stats) {
  CheckStatsMatch(stats, w);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  AddPsiGradWFromProba(PredictProba(theta, x), w, s, stats, 1.0, grad);
  return grad;
}

Eigen::VectorXd PsiThetaCoefficients(const Eigen::MatrixXd& w, int s,
                                     const SensitiveStats& stats) {
  CheckStatsMatch(stats, w);
  return (-w.colwise().squaredNorm() + 2.0 * stats.inv_sqrt[s] * w.row(s))
      .transpose();
}

Eigen::VectorXd PsiGradTheta(const ModelParams& theta, const Eigen::MatrixXd& w,
                             const FeatureVector& x, int s,
                             const SensitiveStats& stats) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.dim());
  AddProbaVjp(x, PredictProba(theta, x), PsiThetaCoefficients(w, s, stats), 1.0,
              grad);
  return grad;
}

namespace {

template <typename Fn>
void ForEachRow(const TabularDataset& ds, std::span<const int> batch, Fn&& fn) {
  if (batch.empty()) {
    for (int i = 0; i < ds.size(); ++i) fn(i);
  } else {
    for (int i : batch) fn(i);
  }
}

double BatchSize(const TabularDataset& ds, std::span<const int> batch) {
  return static_cast<double>(batch.empty() ? ds.size() : batch.size());
}

}  // namespace

double BatchPsi(const ModelParams& theta, const Eigen::MatrixXd& w,
                const TabularDataset& ds, std::span<const int> batch,
                const SensitiveStats& stats) {
  double total = 0.0;
  ForEachRow(ds, batch, [&](int i) {
    total += Psi(theta, w, ds.x(i), ds.group(i), stats);
  });
  return total / BatchSize(ds, batch);
}

Eigen::MatrixXd BatchPsiGradW(const ModelParams& theta,
                              const Eigen::MatrixXd& w,
                              const TabularDataset& ds,
                              std::span<const int> batch,
                              const SensitiveStats& stats) {
  CheckStatsMatch(stats, w);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  const double scale = 1.0 / BatchSize(ds, batch);
  ForEachRow(ds, batch, [&](int i) {
    AddPsiGradWFromProba(PredictProba(theta, ds.x(i)), w, ds.group(i), stats,
                         scale, grad);
  });
  return grad;
}

Eigen::VectorXd BatchPsiGradTheta(const ModelParams& theta,
                                  const Eigen::MatrixXd& w,
                                  const TabularDataset& ds,
                                  std::span<const int> batch,
                                  const SensitiveStats& stats) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.dim());
  const double scale = 1.0 / BatchSize(ds, batch);
  ForEachRow(ds, batch, [&](int i) {
    AddProbaVjp(ds.x(i), PredictProba(theta, ds.x(i)),
                PsiThetaCoefficients(w, ds.group(i), stats), scale, grad);
  });
  return grad;
}

Eigen::MatrixXd InnerMaxClosedForm(const ModelParams& theta,
                                   const TabularDataset& ds,
                                   const SensitiveStats& stats,
                                   InnerMaxOptions options) {
  if (stats.num_groups() != ds.num_groups()) {
    throw Error(ErrorCode::kInvalidArgument, "stats do not match dataset");
  }
  if (!(options.ridge >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "ridge must be nonnegative");
  }
  const SoftJoint sj = ComputeSoftJoint(theta, ds);
  Eigen::MatrixXd w(ds.num_groups(), theta.num_labels());
  for (int j = 0; j < theta.num_labels(); ++j) {
    const double denom = sj.marginal[j] + options.ridge;
    if (!(denom > 0.0)) {
      throw Error(ErrorCode::kSingularity,
                  "soft marginal of class " + std::to_string(j) + " is zero");
    }
    for (int r = 0; r < ds.num_groups(); ++r) {
      w(r, j) = sj.joint(r, j) * stats.inv_sqrt[r] / denom;
    }
  }
  return w;
}

std::vector<Eigen::MatrixXd> InnerMaxClosedForm(const ModelParams& theta,
                                                const TabularDataset& ds,
                                                const DualStack& stack,
                                                InnerMaxOptions options) {
  if (stack.notion == FairnessNotion::kDemographicParity) {
    return {InnerMaxClosedForm(theta, ds, stack.stats.at(0), options)};
  }
  std::vector<std::vector<int>> rows(ds.num_labels());
  for (int i = 0; i < ds.size(); ++i) rows[ds.label(i)].push_back(i);
  std::vector<Eigen::MatrixXd> out;
  for (int y = 0; y < stack.num_blocks(); ++y) {
    if (rows[y].empty()) {
      // No sample touches this block; any W attains the (zero) maximum.
      out.push_back(Eigen::MatrixXd::Zero(ds.num_groups(), theta.num_labels()));
      continue;
    }
    out.push_back(InnerMaxClosedForm(theta, ds.Subset(rows[y]), stack.stats[y],
                                     options));
  }
  return out;
}

double StackPsi(const ModelParams& theta, const std::vector<Eigen::MatrixXd>& w,
                const TabularDataset& ds, const DualStack& stack) {
  double total = 0.0;
  for (int i = 0; i < ds.size(); ++i) {
    const int b = stack.BlockOf(ds.label(i));
    total += Psi(theta, w.at(b), ds.x(i), ds.group(i), stack.stats.at(b));
  }
  return total / ds.size();
}

double StackErmiSoft(const ModelParams& theta, const TabularDataset& ds,
                     const DualStack& stack) {
  if (stack.notion == FairnessNotion::kEqualizedOdds) {
    return ErmiConditionalSoft(theta, ds, stack.stats);
  }
  return ErmiSoft(theta, ds, stack.stats.at(0));
}

EoPsiGradients EoPsiGrads(const ModelParams& theta, const DualStack& stack,
                          const FeatureVector& x, int s, int y) {
  if (y < 0 || y >= stack.num_blocks()) {
    throw Error(ErrorCode::kDegenerateConditional,
                "no conditional statistics for label " + std::to_string(y));
  }
  const Eigen::MatrixXd& w = stack.duals[y].w;
  const SensitiveStats& stats = stack.stats[y];
  const Eigen::VectorXd probs = PredictProba(theta, x);
  EoPsiGradients out{Eigen::VectorXd::Zero(theta.dim()),
                     Eigen::MatrixXd::Zero(w.rows(), w.cols()), y};
  AddProbaVjp(x, probs, PsiThetaCoefficients(w, s, stats), 1.0, out.theta);
  AddPsiGradWFromProba(probs, w, s, stats, 1.0, out.w);
  return out;
}

double DpViolation(std::span<const int> preds, std::span<const int> sensitive,
                   int num_labels, int num_groups) {
  CheckAligned(preds.size(), sensitive.size());
  CheckRange(preds, num_labels, "prediction");
  CheckRange(sensitive, num_groups, "sensitive");
  const Eigen::MatrixXd counts =
      HardCounts(preds, sensitive, num_labels, num_groups);
  Eigen::MatrixXd rates = counts;
  for (int r = 0; r < num_groups; ++r) {
    const double n_r = counts.row(r).sum();
    if (n_r == 0.0) {
      throw Error(ErrorCode::kDegenerateGroup,
                  "sensitive group " + std::to_string(r) + " is absent");
    }
    rates.row(r) /= n_r;
  }
  double worst = 0.0;
  for (int c = 0; c < num_labels; ++c) {
    worst = std::max(worst, rates.col(c).maxCoeff() - rates.col(c).minCoeff());
  }
  return worst;
}

double EoViolation(std::span<const int> preds, std::span<const int> sensitive,
                   std::span<const int> labels, int num_labels,
                   int num_groups) {
  CheckAligned(preds.size(), sensitive.size());
  CheckAligned(preds.size(), labels.size());
  CheckRange(preds, num_labels, "prediction");
  CheckRange(sensitive, num_groups, "sensitive");
  CheckRange(labels, num_labels, "label");
  double worst = 0.0;
  for (int c = 0; c < num_labels; ++c) {
    // Column 0: y == c, column 1: y != c.
    Eigen::MatrixXd hits = Eigen::MatrixXd::Zero(num_groups, 2);
    Eigen::MatrixXd totals = Eigen::MatrixXd::Zero(num_groups, 2);
    for (size_t i = 0; i < preds.size(); ++i) {
      const int cell = labels[i] == c ? 0 : 1;
      totals(sensitive[i], cell) += 1.0;
      hits(sensitive[i], cell) += preds[i] == c ? 1.0 : 0.0;
    }
    for (int cell = 0; cell < 2; ++cell) {
      for (int r = 0; r < num_groups; ++r) {
        if (totals(r, cell) == 0.0) {
          throw Error(ErrorCode::kDegenerateConditional,
                      "no samples with group " + std::to_string(r) +
                          (cell == 0 ? " and y == " : " and y != ") +
                          std::to_string(c));
        }
      }
      const Eigen::VectorXd rate =
          hits.col(cell).cwiseQuotient(totals.col(cell));
      worst = std::max(worst, rate.maxCoeff() - rate.minCoeff());
    }
  }
  return worst;
}

}  // namespace dpfermi
