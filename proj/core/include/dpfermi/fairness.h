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

#ifndef DPFERMI_FAIRNESS_H_
#define DPFERMI_FAIRNESS_H_

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dpfermi/classifier.h"
#include "dpfermi/dataset.h"

namespace dpfermi {

enum class FairnessNotion { kDemographicParity, kEqualizedOdds };

std::string_view NotionName(FairnessNotion notion);  // "dp" / "eo"
FairnessNotion ParseNotion(std::string_view name);

struct FermiConfig {
  double lambda = 0.0;
  FairnessNotion notion = FairnessNotion::kDemographicParity;

  void Validate() const;  // lambda >= 0 and finite
};

// The k x l dual variable W of the min-max reformulation, feasible set the
// entrywise box |W_rj| <= box_radius.
struct DualMatrix {
  Eigen::MatrixXd w;
  double box_radius = 1.0;

  static DualMatrix Zero(int num_groups, int num_labels, double box_radius);
};

// Dual blocks with their sensitive statistics. Demographic parity uses one
// block with the marginal P_S; equalized odds uses one block per label y with
// P_{S|Y=y}, and every sample only touches the block of its own label.
struct DualStack {
  FairnessNotion notion = FairnessNotion::kDemographicParity;
  std::vector<DualMatrix> duals;
  std::vector<SensitiveStats> stats;

  int num_blocks() const { return static_cast<int>(duals.size()); }
  int BlockOf(int label) const {
    return notion == FairnessNotion::kEqualizedOdds ? label : 0;
  }
};

// Per-label sensitive statistics P_{S|Y=y}. Throws kDegenerateConditional if
// a label is absent or a (label, group) cell is empty.
std::vector<SensitiveStats> ConditionalSensitiveStats(const TabularDataset& ds);

// Builds zero-initialized duals and the statistics for `notion` from `train`.
DualStack MakeDualStack(const TabularDataset& train, FairnessNotion notion,
                        double box_radius);

// ---------------------------------------------------------------------------
// ERMI estimators.

// sum_{j,r} p(j,r)^2 / (p_yhat(j) p_S(r)) - 1 on hard predictions. Empty
// joint cells contribute 0. Throws kDegenerateGroup if a group is absent.
double ErmiHard(std::span<const int> preds, std::span<const int> sensitive,
                int num_labels, int num_groups);

// Soft empirical distributions of the randomized classifier F(x, theta):
// joint(r, j) = (1/n) sum_i F_j(x_i) 1{s_i = r}, marginal(j) = (1/n) sum_i F_j.
struct SoftJoint {
  Eigen::MatrixXd joint;     // k x l
  Eigen::VectorXd marginal;  // l
};
SoftJoint ComputeSoftJoint(const ModelParams& theta, const TabularDataset& ds);

// ERMI of the soft joint, with p_S taken from `stats`.
double ErmiSoft(const ModelParams& theta, const TabularDataset& ds,
                const SensitiveStats& stats);

// Conditional ERMI given the true label, on hard predictions. Labels that do
// not occur carry zero weight; a present label with an empty group throws
// kDegenerateConditional.
double ErmiConditional(std::span<const int> preds,
                       std::span<const int> sensitive,
                       std::span<const int> labels, int num_labels,
                       int num_groups);

// Conditional ERMI of the soft predictions, using the per-label statistics.
double ErmiConditionalSoft(const ModelParams& theta, const TabularDataset& ds,
                           const std::vector<SensitiveStats>& cond_stats);

// ---------------------------------------------------------------------------
// The per-sample saddle function
//   psi(theta, W) = -Tr(W diag(F) W^T) + 2 Tr(W^T P_S^{-1/2} B) - 1,
// B[r][j] = 1{s = r} F_j(x, theta). Its gradients:
//   d/dW     = -2 W diag(F) + 2 P_S^{-1/2} B
//   d/dtheta = J^T (-diag(W^T W) + 2 W[s, :]^T / sqrt(P_S(s)))
// with J the Jacobian of F.

double Psi(const ModelParams& theta, const Eigen::MatrixXd& w,
           const FeatureVector& x, int s, const SensitiveStats& stats);
double PsiFromProba(const Eigen::VectorXd& probs, const Eigen::MatrixXd& w,
                    int s, const SensitiveStats& stats);

Eigen::MatrixXd PsiGradW(const ModelParams& theta, const Eigen::MatrixXd& w,
                         const FeatureVector& x, int s,
                         const SensitiveStats& stats);
// Accumulates scale * dpsi/dW into `out` given the probabilities.
void AddPsiGradWFromProba(const Eigen::VectorXd& probs,
                          const Eigen::MatrixXd& w, int s,
                          const SensitiveStats& stats, double scale,
                          Eigen::MatrixXd& out);

Eigen::VectorXd PsiGradTheta(const ModelParams& theta, const Eigen::MatrixXd& w,
                             const FeatureVector& x, int s,
                             const SensitiveStats& stats);
// The length-l vector g with dpsi/dtheta = J^T g.
Eigen::VectorXd PsiThetaCoefficients(const Eigen::MatrixXd& w, int s,
                                     const SensitiveStats& stats);

// Averages of psi and its gradients over ds rows `batch` (all rows if empty).
double BatchPsi(const ModelParams& theta, const Eigen::MatrixXd& w,
                const TabularDataset& ds, std::span<const int> batch,
                const SensitiveStats& stats);
Eigen::MatrixXd BatchPsiGradW(const ModelParams& theta,
                              const Eigen::MatrixXd& w,
                              const TabularDataset& ds,
                              std::span<const int> batch,
                              const SensitiveStats& stats);
Eigen::VectorXd BatchPsiGradTheta(const ModelParams& theta,
                                  const Eigen::MatrixXd& w,
                                  const TabularDataset& ds,
                                  std::span<const int> batch,
                                  const SensitiveStats& stats);

struct InnerMaxOptions {
  // Added to each soft marginal before division. Zero means a vanishing
  // marginal is an error.
  double ridge = 0.0;
};
inline constexpr double kDefaultInnerMaxRidge = 1e-8;

// argmax_W of the dataset-averaged psi:
//   W*[r][j] = p(j, r) / (sqrt(P_S(r)) p_yhat(j)).
// Throws kSingularity when a soft marginal is zero and ridge == 0.
Eigen::MatrixXd InnerMaxClosedForm(const ModelParams& theta,
                                   const TabularDataset& ds,
                                   const SensitiveStats& stats,
                                   InnerMaxOptions options = {});

// Closed-form maximizer per dual block of `stack` (per-label subsets for
// equalized odds).
std::vector<Eigen::MatrixXd> InnerMaxClosedForm(const ModelParams& theta,
                                                const TabularDataset& ds,
                                                const DualStack& stack,
                                                InnerMaxOptions options = {});

// (1/n) sum_i psi_i with each row using the dual block of its label.
double StackPsi(const ModelParams& theta, const std::vector<Eigen::MatrixXd>& w,
                const TabularDataset& ds, const DualStack& stack);

// The regularizer the stack encodes: ErmiSoft or ErmiConditionalSoft.
double StackErmiSoft(const ModelParams& theta, const TabularDataset& ds,
                     const DualStack& stack);

// Equalized-odds gradients of one sample: the theta gradient and the
// gradient for the dual block of label y (the other blocks get zero).
struct EoPsiGradients {
  Eigen::VectorXd theta;
  Eigen::MatrixXd w;
  int block = 0;
};
EoPsiGradients EoPsiGrads(const ModelParams& theta, const DualStack& stack,
                          const FeatureVector& x, int s, int y);

// ---------------------------------------------------------------------------
// Violation metrics on hard predictions.

// max over classes c and group pairs of |P[yhat = c | s1] - P[yhat = c | s2]|.
double DpViolation(std::span<const int> preds, std::span<const int> sensitive,
                   int num_labels, int num_groups);

// max over classes c and group pairs of the larger of
//   |P[yhat = c | s1, y = c] - P[yhat = c | s2, y = c]| and
//   |P[yhat = c | s1, y != c] - P[yhat = c | s2, y != c]|.
// Throws kDegenerateConditional when a needed conditioning cell is empty.
double EoViolation(std::span<const int> preds, std::span<const int> sensitive,
                   std::span<const int> labels, int num_labels,
                   int num_groups);

}  // namespace dpfermi

#endif  // DPFERMI_FAIRNESS_H_
