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

#include "dpfermi/dataset.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "dpfermi/error.h"

namespace dpfermi {
namespace {

std::string Trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

// First-appearance encoder, optionally frozen to a given value list.
class CategoryEncoder {
 public:
  CategoryEncoder() = default;
  explicit CategoryEncoder(const std::vector<std::string>& fixed)
      : values_(fixed), frozen_(true) {
    for (size_t i = 0; i < values_.size(); ++i) {
      index_.emplace(values_[i], static_cast<int>(i));
    }
  }

  std::optional<int> Encode(const std::string& v) {
    if (auto it = index_.find(v); it != index_.end()) return it->second;
    if (frozen_) return std::nullopt;
    const int code = static_cast<int>(values_.size());
    values_.push_back(v);
    index_.emplace(v, code);
    return code;
  }

  const std::vector<std::string>& values() const { return values_; }

 private:
  std::vector<std::string> values_;
  std::unordered_map<std::string, int> index_;
  bool frozen_ = false;
};

}  // namespace

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string CsvQuote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

TabularDataset::TabularDataset(RowMatrix features, std::vector<int> labels,
                               std::vector<int> sensitive, int num_labels,
                               int num_groups, Encoding encoding)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      sensitive_(std::move(sensitive)),
      num_labels_(num_labels),
      num_groups_(num_groups),
      encoding_(std::move(encoding)) {
  const auto n = static_cast<Eigen::Index>(labels_.size());
  if (n < 1) throw Error(ErrorCode::kEmptyDataset, "dataset has no rows");
  if (features_.rows() != n || static_cast<Eigen::Index>(sensitive_.size()) != n) {
    throw Error(ErrorCode::kInvalidArgument,
                "features, labels and sensitive attributes disagree on n");
  }
  if (num_labels_ < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "need at least 2 labels, got " + std::to_string(num_labels_));
  }
  if (num_groups_ < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "need at least 2 sensitive groups, got " +
                    std::to_string(num_groups_));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels_[i] < 0 || labels_[i] >= num_labels_) {
      throw Error(ErrorCode::kInvalidArgument,
                  "label out of range at row " + std::to_string(i));
    }
    if (sensitive_[i] < 0 || sensitive_[i] >= num_groups_) {
      throw Error(ErrorCode::kInvalidArgument,
                  "sensitive attribute out of range at row " + std::to_string(i));
    }
  }
  if (!features_.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "non-finite feature value");
  }
}

TabularDataset TabularDataset::Subset(std::span<const int> indices) const {
  RowMatrix x(static_cast<Eigen::Index>(indices.size()), features_.cols());
  std::vector<int> y(indices.size());
  std::vector<int> s(indices.size());
  for (size_t r = 0; r < indices.size(); ++r) {
    const int i = indices[r];
    if (i < 0 || i >= size()) {
      throw Error(ErrorCode::kInvalidArgument, "subset index out of range");
    }
    x.row(static_cast<Eigen::Index>(r)) = features_.row(i);
    y[r] = labels_[i];
    s[r] = sensitive_[i];
  }
  return TabularDataset(std::move(x), std::move(y), std::move(s), num_labels_,
                        num_groups_, encoding_);
}

TabularDataset LoadCsv(const std::filesystem::path& path,
                       const CsvSchema& schema,
                       const std::optional<Encoding>& fixed) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line) || Trim(line).empty()) {
    throw Error(ErrorCode::kEmptyDataset, path.string() + " is empty");
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    line.erase(0, 3);
  }
  std::vector<std::string> header = SplitCsvLine(line);
  for (auto& h : header) h = Trim(h);

  int label_col = -1;
  int sensitive_col = -1;
  std::vector<int> feature_cols;
  Encoding encoding;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    if (header[c] == schema.label_column) {
      label_col = c;
    } else if (header[c] == schema.sensitive_column) {
      sensitive_col = c;
    } else {
      feature_cols.push_back(c);
      encoding.feature_names.push_back(header[c]);
    }
  }
  if (label_col < 0) {
    throw Error(ErrorCode::kSchema, "missing label column '" +
                                        schema.label_column + "'");
  }
  if (sensitive_col < 0) {
    throw Error(ErrorCode::kSchema, "missing sensitive column '" +
                                        schema.sensitive_column + "'");
  }
  if (schema.label_column == schema.sensitive_column) {
    throw Error(ErrorCode::kSchema,
                "label and sensitive column must differ");
  }

  CategoryEncoder label_enc = fixed ? CategoryEncoder(fixed->label_values)
                                    : CategoryEncoder();
  CategoryEncoder group_enc = fixed ? CategoryEncoder(fixed->sensitive_values)
                                    : CategoryEncoder();

  std::vector<double> values;
  std::vector<int> labels;
  std::vector<int> sensitive;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (Trim(line).empty()) continue;
    const std::vector<std::string> fields = SplitCsvLine(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::kParse,
                  "row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    for (int c : feature_cols) {
      const std::string cell = Trim(fields[c]);
      double v = 0.0;
      size_t consumed = 0;
      try {
        v = std::stod(cell, &consumed);
      } catch (const std::exception&) {
        consumed = 0;
      }
      if (cell.empty() || consumed != cell.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::kParse,
                    "row " + std::to_string(row) + ", column '" + header[c] +
                        "': non-numeric value '" + cell + "'");
      }
      values.push_back(v);
    }
    const std::string y_raw = Trim(fields[label_col]);
    const std::string s_raw = Trim(fields[sensitive_col]);
    if (y_raw.empty() || s_raw.empty()) {
      throw Error(ErrorCode::kParse,
                  "row " + std::to_string(row) + ": missing label or group");
    }
    const auto y = label_enc.Encode(y_raw);
    const auto s = group_enc.Encode(s_raw);
    if (!y || !s) {
      throw Error(ErrorCode::kParse, "row " + std::to_string(row) +
                                         ": value not in fixed encoding");
    }
    labels.push_back(*y);
    sensitive.push_back(*s);
  }
  if (labels.empty()) {
    throw Error(ErrorCode::kEmptyDataset, path.string() + " has no data rows");
  }

  const auto n = static_cast<Eigen::Index>(labels.size());
  const auto d = static_cast<Eigen::Index>(feature_cols.size());
  RowMatrix x = Eigen::Map<const RowMatrix>(values.data(), n, d);
  encoding.label_values = label_enc.values();
  encoding.sensitive_values = group_enc.values();
  const int l = static_cast<int>(encoding.label_values.size());
  const int k = static_cast<int>(encoding.sensitive_values.size());
  return TabularDataset(std::move(x), std::move(labels), std::move(sensitive),
                        l, k, std::move(encoding));
}

void WriteCsv(const TabularDataset& ds, const std::filesystem::path& path,
              const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  const Encoding& enc = ds.encoding();
  for (int c = 0; c < ds.num_features(); ++c) {
    const std::string name = c < static_cast<int>(enc.feature_names.size())
                                 ? enc.feature_names[c]
                                 : "x" + std::to_string(c);
    out << CsvQuote(name) << ',';
  }
  out << CsvQuote(schema.label_column) << ','
      << CsvQuote(schema.sensitive_column) << '\n';
  const auto raw = [](const std::vector<std::string>& values, int code) {
    return code < static_cast<int>(values.size()) ? values[code]
                                                  : std::to_string(code);
  };
  out.precision(17);
  for (int i = 0; i < ds.size(); ++i) {
    for (int c = 0; c < ds.num_features(); ++c) out << ds.features()(i, c) << ',';
    out << CsvQuote(raw(enc.label_values, ds.label(i))) << ','
        << CsvQuote(raw(enc.sensitive_values, ds.group(i))) << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::pair<TabularDataset, TabularDataset> TrainTestSplit(
    const TabularDataset& ds, double test_fraction, uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "test fraction must lie in (0, 1)");
  }
  const int n = ds.size();
  // The small slack keeps exact products such as 100 * 0.75 from rounding up.
  const int n_train = static_cast<int>(
      std::ceil(static_cast<double>(n) * (1.0 - test_fraction) - 1e-9));
  if (n_train < 1 || n_train >= n) {
    throw Error(ErrorCode::kInvalidArgument,
                "split of " + std::to_string(n) + " rows leaves a side empty");
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::span<const int> all(order);
  return {ds.Subset(all.first(n_train)), ds.Subset(all.subspan(n_train))};
}

SensitiveStats ComputeSensitiveStats(std::span<const int> sensitive,
                                     int num_groups) {
  if (sensitive.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "no sensitive attributes");
  }
  SensitiveStats stats;
  stats.counts.assign(num_groups, 0);
  for (int s : sensitive) {
    if (s < 0 || s >= num_groups) {
      throw Error(ErrorCode::kInvalidArgument, "sensitive attribute out of range");
    }
    ++stats.counts[s];
  }
  const double n = static_cast<double>(sensitive.size());
  stats.probabilities.resize(num_groups);
  stats.inv_sqrt.resize(num_groups);
  stats.rho = 1.0;
  for (int r = 0; r < num_groups; ++r) {
    if (stats.counts[r] == 0) {
      throw Error(ErrorCode::kDegenerateGroup,
                  "sensitive group " + std::to_string(r) + " is empty");
    }
    stats.probabilities[r] = static_cast<double>(stats.counts[r]) / n;
    stats.inv_sqrt[r] = 1.0 / std::sqrt(stats.probabilities[r]);
    stats.rho = std::min(stats.rho, stats.probabilities[r]);
  }
  return stats;
}

SensitiveStats ComputeSensitiveStats(const TabularDataset& ds) {
  return ComputeSensitiveStats(ds.sensitive(), ds.num_groups());
}

Eigen::VectorXd OneHot(int index, int dim) {
  if (dim < 1 || index < 0 || index >= dim) {
    throw Error(ErrorCode::kInvalidArgument,
                "one-hot index " + std::to_string(index) +
                    " out of range for dimension " + std::to_string(dim));
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  v[index] = 1.0;
  return v;
}

std::vector<int> Minibatch(int n, int m, Rng& rng) {
  if (m < 1 || m > n) {
    throw Error(ErrorCode::kInvalidArgument,
                "batch size " + std::to_string(m) + " not in [1, " +
                    std::to_string(n) + "]");
  }
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<int> batch(m);
  for (int& i : batch) i = pick(rng);
  return batch;
}

std::vector<int> MinibatchWithoutReplacement(int n, int m, Rng& rng) {
  if (m < 1 || m > n) {
    throw Error(ErrorCode::kInvalidArgument,
                "batch size " + std::to_string(m) + " not in [1, " +
                    std::to_string(n) + "]");
  }
  // Partial Fisher-Yates.
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int t = 0; t < m; ++t) {
    std::uniform_int_distribution<int> pick(t, n - 1);
    std::swap(pool[t], pool[pick(rng)]);
  }
  pool.resize(m);
  return pool;
}

TabularDataset AdjacentSensitive(const TabularDataset& ds, int i,
                                 int new_group) {
  if (i < 0 || i >= ds.size()) {
    throw Error(ErrorCode::kInvalidArgument, "row index out of range");
  }
  if (new_group < 0 || new_group >= ds.num_groups()) {
    throw Error(ErrorCode::kInvalidArgument, "group out of range");
  }
  const int old_group = ds.group(i);
  if (new_group == old_group) {
    throw Error(ErrorCode::kInvalidArgument,
                "adjacent dataset must change the sensitive attribute");
  }
  const auto& s = ds.sensitive();
  if (std::count(s.begin(), s.end(), old_group) <= 1) {
    throw Error(ErrorCode::kDegenerateGroup,
                "flip would empty group " + std::to_string(old_group));
  }
  std::vector<int> flipped = s;
  flipped[i] = new_group;
  return TabularDataset(ds.features(), ds.labels(), std::move(flipped),
                        ds.num_labels(), ds.num_groups(), ds.encoding());
}

}  // namespace dpfermi
