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

#include "dpfermi/classifier.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "dpfermi/error.h"
#include "json.hpp"

namespace dpfermi {
namespace {

constexpr double kMinProbability = 1e-30;

void CheckDims(const ModelParams& theta, const FeatureVector& x) {
  if (x.size() != theta.num_features()) {
    throw Error(ErrorCode::kInvalidArgument,
                "feature vector has " + std::to_string(x.size()) +
                    " entries, model expects " +
                    std::to_string(theta.num_features()));
  }
}

void CheckLabel(const ModelParams& theta, int y) {
  if (y < 0 || y >= theta.num_labels()) {
    throw Error(ErrorCode::kInvalidArgument,
                "label " + std::to_string(y) + " out of range");
  }
}

}  // namespace

ModelParams::ModelParams(int num_labels, int num_features)
    : num_labels_(num_labels),
      num_features_(num_features),
      flat_(Eigen::VectorXd::Zero(num_labels * num_features + num_labels)) {
  if (num_labels < 1 || num_features < 0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid model dimensions");
  }
}

ModelParams::ModelParams(const Eigen::MatrixXd& weights,
                         const Eigen::VectorXd& bias)
    : ModelParams(static_cast<int>(weights.rows()),
                  static_cast<int>(weights.cols())) {
  if (bias.size() != weights.rows()) {
    throw Error(ErrorCode::kInvalidArgument, "bias length != number of labels");
  }
  Eigen::Map<RowMatrix>(flat_.data(), num_labels_, num_features_) = weights;
  flat_.tail(num_labels_) = bias;
  if (!flat_.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "non-finite model parameter");
  }
}

ModelParams::ModelParams(Eigen::VectorXd flat, int num_labels,
                         int num_features)
    : num_labels_(num_labels),
      num_features_(num_features),
      flat_(std::move(flat)) {
  if (flat_.size() != num_labels * num_features + num_labels) {
    throw Error(ErrorCode::kInvalidArgument,
                "flat parameter vector has the wrong length");
  }
}

Eigen::VectorXd Logits(const ModelParams& theta, const FeatureVector& x) {
  CheckDims(theta, x);
  return theta.weights() * x + theta.bias();
}

Eigen::VectorXd PredictProba(const ModelParams& theta, const FeatureVector& x) {
  Eigen::VectorXd z = Logits(theta, x);
  if (!z.allFinite()) throw Error(ErrorCode::kNumeric, "non-finite logits");
  z.array() -= z.maxCoeff();
  z = z.array().exp();
  return z / z.sum();
}

int ArgmaxLowestIndex(const Eigen::VectorXd& probs) {
  int best = 0;
  for (int j = 1; j < probs.size(); ++j) {
    if (probs[j] > probs[best]) best = j;
  }
  return best;
}

int PredictLabel(const ModelParams& theta, const FeatureVector& x) {
  return ArgmaxLowestIndex(PredictProba(theta, x));
}

double Loss(const ModelParams& theta, const FeatureVector& x, int y) {
  CheckLabel(theta, y);
  const Eigen::VectorXd p = PredictProba(theta, x);
  return -std::log(std::max(p[y], kMinProbability));
}

Eigen::VectorXd LossGrad(const ModelParams& theta, const FeatureVector& x,
                         int y) {
  CheckLabel(theta, y);
  Eigen::VectorXd residual = PredictProba(theta, x);
  residual[y] -= 1.0;
  Eigen::VectorXd grad(theta.dim());
  Eigen::Map<RowMatrix>(grad.data(), theta.num_labels(), theta.num_features()) =
      residual * x.transpose();
  grad.tail(theta.num_labels()) = residual;
  return grad;
}

Eigen::MatrixXd JacobianProba(const ModelParams& theta, const FeatureVector& x) {
  const Eigen::VectorXd p = PredictProba(theta, x);
  const int l = theta.num_labels();
  const int d = theta.num_features();
  // dF_j/dz_c = F_j (delta_jc - F_c)
  Eigen::MatrixXd dz = -p * p.transpose();
  dz.diagonal() += p;
  Eigen::MatrixXd jac(l, theta.dim());
  for (int c = 0; c < l; ++c) {
    for (int p_idx = 0; p_idx < d; ++p_idx) {
      jac.col(theta.weight_index(c, p_idx)) = dz.col(c) * x[p_idx];
    }
    jac.col(theta.bias_index(c)) = dz.col(c);
  }
  return jac;
}

void AddProbaVjp(const FeatureVector& x, const Eigen::VectorXd& probs,
                 const Eigen::VectorXd& g, double scale, Eigen::VectorXd& out) {
  const auto l = probs.size();
  const auto d = x.size();
  // Gradient with respect to the logits of sum_j g_j F_j.
  const double mean = probs.dot(g);
  const Eigen::VectorXd a = (probs.array() * (g.array() - mean)).matrix();
  Eigen::Map<RowMatrix>(out.data(), l, d).noalias() += scale * a * x.transpose();
  out.tail(l) += scale * a;
}

double SoftmaxLipschitzBound(const RowMatrix& features) {
  const double max_sq =
      features.rows() == 0 ? 0.0 : features.rowwise().squaredNorm().maxCoeff();
  return 0.5 * std::sqrt(max_sq + 1.0);
}

std::vector<int> PredictLabels(const ModelParams& theta,
                               const TabularDataset& ds) {
  std::vector<int> preds(ds.size());
  for (int i = 0; i < ds.size(); ++i) preds[i] = PredictLabel(theta, ds.x(i));
  return preds;
}

double EmpiricalLoss(const ModelParams& theta, const TabularDataset& ds) {
  double total = 0.0;
  for (int i = 0; i < ds.size(); ++i) total += Loss(theta, ds.x(i), ds.label(i));
  return total / ds.size();
}

Eigen::VectorXd EmpiricalLossGrad(const ModelParams& theta,
                                  const TabularDataset& ds) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.dim());
  for (int i = 0; i < ds.size(); ++i) grad += LossGrad(theta, ds.x(i), ds.label(i));
  return grad / ds.size();
}

double ErrorRate(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "prediction and label vectors must be nonempty and aligned");
  }
  size_t wrong = 0;
  for (size_t i = 0; i < truth.size(); ++i) wrong += predicted[i] != truth[i];
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

void SaveCheckpoint(const Checkpoint& checkpoint,
                    const std::filesystem::path& path) {
  const ModelParams& p = checkpoint.params;
  nlohmann::json j;
  j["num_labels"] = p.num_labels();
  j["num_features"] = p.num_features();
  const Eigen::VectorXd w = p.flat().head(p.num_labels() * p.num_features());
  j["weights"] = std::vector<double>(w.data(), w.data() + w.size());
  j["bias"] = std::vector<double>(p.bias().begin(), p.bias().end());
  j["encoding"] = {{"features", checkpoint.encoding.feature_names},
                   {"labels", checkpoint.encoding.label_values},
                   {"sensitive", checkpoint.encoding.sensitive_values}};
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    const int l = j.at("num_labels").get<int>();
    const int d = j.at("num_features").get<int>();
    const auto w = j.at("weights").get<std::vector<double>>();
    const auto b = j.at("bias").get<std::vector<double>>();
    if (static_cast<int>(w.size()) != l * d || static_cast<int>(b.size()) != l) {
      throw Error(ErrorCode::kParse, "checkpoint dimensions are inconsistent");
    }
    Eigen::VectorXd flat(l * d + l);
    std::copy(w.begin(), w.end(), flat.data());
    std::copy(b.begin(), b.end(), flat.data() + l * d);
    if (!flat.allFinite()) {
      throw Error(ErrorCode::kParse, "checkpoint has non-finite parameters");
    }
    Encoding enc;
    const auto& e = j.at("encoding");
    enc.feature_names = e.at("features").get<std::vector<std::string>>();
    enc.label_values = e.at("labels").get<std::vector<std::string>>();
    enc.sensitive_values = e.at("sensitive").get<std::vector<std::string>>();
    return Checkpoint{ModelParams(std::move(flat), l, d), std::move(enc)};
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kParse, path.string() + ": " + ex.what());
  }
}

}  // namespace dpfermi
