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

#ifndef DPFERMI_CLASSIFIER_H_
#define DPFERMI_CLASSIFIER_H_

#include <filesystem>

#include <Eigen/Dense>

#include "dpfermi/dataset.h"

namespace dpfermi {

using FeatureVector = Eigen::Ref<const Eigen::VectorXd>;

// Parameters of a multinomial logistic model with l classes over d features,
// stored flat as [weights (l x d, row-major) ; bias (l)] so that optimizers
// can treat theta as one vector of dimension l * d + l.
class ModelParams {
 public:
  // All-zero parameters.
  ModelParams(int num_labels, int num_features);
  ModelParams(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias);
  ModelParams(Eigen::VectorXd flat, int num_labels, int num_features);

  int num_labels() const { return num_labels_; }
  int num_features() const { return num_features_; }
  int dim() const { return static_cast<int>(flat_.size()); }

  const Eigen::VectorXd& flat() const { return flat_; }
  Eigen::VectorXd& mutable_flat() { return flat_; }

  Eigen::Map<const RowMatrix> weights() const {
    return {flat_.data(), num_labels_, num_features_};
  }
  Eigen::VectorBlock<const Eigen::VectorXd> bias() const {
    return flat_.tail(num_labels_);
  }

  // Offsets into flat() for weight (c, p) and bias c.
  int weight_index(int c, int p) const { return c * num_features_ + p; }
  int bias_index(int c) const { return num_labels_ * num_features_ + c; }

 private:
  int num_labels_;
  int num_features_;
  Eigen::VectorXd flat_;
};

// weights * x + bias. Throws kInvalidArgument on a dimension mismatch.
Eigen::VectorXd Logits(const ModelParams& theta, const FeatureVector& x);

// Softmax of the logits with max-subtraction. Throws kNumeric on non-finite
// logits.
Eigen::VectorXd PredictProba(const ModelParams& theta, const FeatureVector& x);

// Argmax of PredictProba, ties to the smallest index.
int PredictLabel(const ModelParams& theta, const FeatureVector& x);
int ArgmaxLowestIndex(const Eigen::VectorXd& probs);

// Cross-entropy -log F_y(x), with F_y clamped below at 1e-30.
double Loss(const ModelParams& theta, const FeatureVector& x, int y);

// Exact gradient of Loss in flat parameter order: (F - e_y) (x) [x; 1].
Eigen::VectorXd LossGrad(const ModelParams& theta, const FeatureVector& x,
                         int y);

// l x dim() matrix whose row j is the gradient of F_j(x, theta).
Eigen::MatrixXd JacobianProba(const ModelParams& theta, const FeatureVector& x);

// J^T g for J = JacobianProba(theta, x), given the probabilities F(x, theta),
// without forming J. Accumulates scale * J^T g into `out`.
void AddProbaVjp(const FeatureVector& x, const Eigen::VectorXd& probs,
                 const Eigen::VectorXd& g, double scale, Eigen::VectorXd& out);

// Upper bound on the Lipschitz constant of theta -> F(x, theta) over the rows
// of `features`: the softmax Jacobian has operator norm at most 1/2, and the
// logits are linear in theta with gradient norm sqrt(|x|^2 + 1).
double SoftmaxLipschitzBound(const RowMatrix& features);

// Predicted labels for every row of `ds`.
std::vector<int> PredictLabels(const ModelParams& theta,
                               const TabularDataset& ds);

// Mean cross-entropy over `ds` and its gradient.
double EmpiricalLoss(const ModelParams& theta, const TabularDataset& ds);
Eigen::VectorXd EmpiricalLossGrad(const ModelParams& theta,
                                  const TabularDataset& ds);

// Fraction of rows whose predicted label differs from the true one.
double ErrorRate(std::span<const int> predicted, std::span<const int> truth);

struct Checkpoint {
  ModelParams params;
  Encoding encoding;
};

// JSON: {"num_labels", "num_features", "weights" (row-major), "bias",
//        "encoding": {"features", "labels", "sensitive"}}.
void SaveCheckpoint(const Checkpoint& checkpoint,
                    const std::filesystem::path& path);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace dpfermi

#endif  // DPFERMI_CLASSIFIER_H_
