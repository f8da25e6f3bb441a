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

#ifndef DPFERMI_DATASET_H_
#define DPFERMI_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dpfermi/random.h"

namespace dpfermi {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Maps encoded class / group indices back to the raw CSV values. Index i of
// `label_values` is the raw label encoded as i (first-appearance order).
struct Encoding {
  std::vector<std::string> feature_names;
  std::vector<std::string> label_values;
  std::vector<std::string> sensitive_values;
};

// Tabular data with non-sensitive features, labels in [0, num_labels) and
// sensitive attributes in [0, num_groups). Immutable after construction.
//
// Labels and groups are zero-based throughout the library; raw values are
// recovered through encoding().
class TabularDataset {
 public:
  // Validates every invariant (ranges, finiteness, n >= 1, l >= 2, k >= 2).
  // Throws Error(kInvalidArgument) on violation.
  TabularDataset(RowMatrix features, std::vector<int> labels,
                 std::vector<int> sensitive, int num_labels, int num_groups,
                 Encoding encoding = {});

  int size() const { return static_cast<int>(labels_.size()); }
  int num_features() const { return static_cast<int>(features_.cols()); }
  int num_labels() const { return num_labels_; }
  int num_groups() const { return num_groups_; }

  const RowMatrix& features() const { return features_; }
  auto row(int i) const { return features_.row(i); }
  // Row i as a column vector, the form the model functions take.
  auto x(int i) const { return features_.row(i).transpose(); }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<int>& sensitive() const { return sensitive_; }
  int label(int i) const { return labels_[i]; }
  int group(int i) const { return sensitive_[i]; }
  const Encoding& encoding() const { return encoding_; }

  // Rows `indices` in the given order, same l, k and encoding.
  TabularDataset Subset(std::span<const int> indices) const;

 private:
  RowMatrix features_;
  std::vector<int> labels_;
  std::vector<int> sensitive_;
  int num_labels_;
  int num_groups_;
  Encoding encoding_;
};

// Empirical sensitive-attribute distribution: counts, P_S, rho = min_r P_S(r)
// and the diagonal of P_S^{-1/2}.
struct SensitiveStats {
  std::vector<int64_t> counts;
  std::vector<double> probabilities;
  double rho = 0.0;
  std::vector<double> inv_sqrt;

  int num_groups() const { return static_cast<int>(counts.size()); }
};

struct CsvSchema {
  std::string label_column;
  std::string sensitive_column;
};

// Splits one CSV record. Double-quoted fields may contain commas and ""
// escapes; embedded newlines are not supported.
std::vector<std::string> SplitCsvLine(const std::string& line);

// `field` quoted per RFC 4180 when it contains a comma, quote or line break.
std::string CsvQuote(const std::string& field);

// Reads a header-first, comma-separated file. Every column other than the
// label and sensitive columns must be numeric. Label and sensitive values are
// encoded in first-appearance order unless `fixed` supplies the encoding (as
// when evaluating a checkpoint); values unknown to `fixed` are a parse error.
TabularDataset LoadCsv(const std::filesystem::path& path,
                       const CsvSchema& schema,
                       const std::optional<Encoding>& fixed = std::nullopt);

// Writes `ds` in the format LoadCsv reads, using raw encoded values.
void WriteCsv(const TabularDataset& ds, const std::filesystem::path& path,
              const CsvSchema& schema);

// Uniform random partition into (train, test). The train part has
// ceil(n * (1 - test_fraction)) rows. Deterministic given `seed`.
std::pair<TabularDataset, TabularDataset> TrainTestSplit(
    const TabularDataset& ds, double test_fraction, uint64_t seed);

// Throws Error(kDegenerateGroup) if any group is empty.
SensitiveStats ComputeSensitiveStats(std::span<const int> sensitive,
                                     int num_groups);
SensitiveStats ComputeSensitiveStats(const TabularDataset& ds);

// Zero-based one-hot vector: entry `index` of a length-`dim` vector is 1.
Eigen::VectorXd OneHot(int index, int dim);

// m indices drawn uniformly with replacement from [0, n).
std::vector<int> Minibatch(int n, int m, Rng& rng);

// m distinct indices drawn uniformly from [0, n).
std::vector<int> MinibatchWithoutReplacement(int n, int m, Rng& rng);

// Copy of `ds` whose only difference is sensitive[i] = new_group.
// Throws kInvalidArgument if new_group equals the current group and
// kDegenerateGroup if the flip would leave a group empty.
TabularDataset AdjacentSensitive(const TabularDataset& ds, int i,
                                 int new_group);

}  // namespace dpfermi

#endif  // DPFERMI_DATASET_H_
