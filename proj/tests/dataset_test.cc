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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "dpfermi/error.h"
#include "test_util.h"

namespace dpfermi {
namespace {

using ::dpfermi::testing::RandomDataset;

std::filesystem::path WriteFile(const std::string& name,
                                const std::string& contents) {
  const std::filesystem::path path =
      std::filesystem::path(::testing::TempDir()) / name;
  std::ofstream(path, std::ios::binary) << contents;
  return path;
}

ErrorCode CodeOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kIo;
}

TabularDataset Tiny(std::vector<int> s, int k = 2) {
  const int n = static_cast<int>(s.size());
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) y[i] = i % 2;
  return TabularDataset(RowMatrix::Zero(n, 1), y, std::move(s), 2, k);
}

TEST(TabularDatasetTest, ValidatesInvariants) {
  EXPECT_EQ(CodeOf([] { TabularDataset(RowMatrix(0, 1), {}, {}, 2, 2); }),
            ErrorCode::kEmptyDataset);
  EXPECT_EQ(CodeOf([] { TabularDataset(RowMatrix::Zero(1, 1), {0}, {0}, 1, 2); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([] { TabularDataset(RowMatrix::Zero(1, 1), {0}, {0}, 2, 1); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([] { TabularDataset(RowMatrix::Zero(1, 1), {2}, {0}, 2, 2); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([] { TabularDataset(RowMatrix::Zero(1, 1), {0}, {-1}, 2, 2); }),
            ErrorCode::kInvalidArgument);
  RowMatrix bad = RowMatrix::Zero(1, 1);
  bad(0, 0) = std::nan("");
  EXPECT_EQ(CodeOf([&] { TabularDataset(bad, {0}, {0}, 2, 2); }),
            ErrorCode::kInvalidArgument);
}

TEST(LoadCsvTest, EncodesInFirstAppearanceOrder) {
  const auto path = WriteFile("four.csv",
                              "f1,label,f2,sex\n"
                              "1.0,a,2.0,m\n"
                              "3.0,b,4.0,f\n"
                              "5.0,a,6.0,m\n"
                              "7.0,b,8.0,f\n");
  const TabularDataset ds = LoadCsv(path, {"label", "sex"});
  EXPECT_EQ(ds.size(), 4);
  EXPECT_EQ(ds.num_features(), 2);
  EXPECT_EQ(ds.num_labels(), 2);
  EXPECT_EQ(ds.num_groups(), 2);
  EXPECT_EQ(ds.labels(), (std::vector<int>{0, 1, 0, 1}));
  EXPECT_EQ(ds.sensitive(), (std::vector<int>{0, 1, 0, 1}));
  EXPECT_EQ(ds.encoding().label_values, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ds.encoding().sensitive_values,
            (std::vector<std::string>{"m", "f"}));
  EXPECT_EQ(ds.encoding().feature_names,
            (std::vector<std::string>{"f1", "f2"}));
  EXPECT_DOUBLE_EQ(ds.features()(3, 1), 8.0);

  // Reloading yields the same encoding.
  const TabularDataset again = LoadCsv(path, {"label", "sex"});
  EXPECT_EQ(again.encoding().label_values, ds.encoding().label_values);
  EXPECT_EQ(again.encoding().sensitive_values, ds.encoding().sensitive_values);
}

TEST(LoadCsvTest, HandlesQuotesBomAndCrlf) {
  const auto path = WriteFile("quoted.csv",
                              "\xEF\xBB\xBF\"x, one\",y,s\r\n"
                              "1,\"yes, really\",g1\r\n"
                              "2,no,g2\r\n");
  const TabularDataset ds = LoadCsv(path, {"y", "s"});
  EXPECT_EQ(ds.encoding().feature_names[0], "x, one");
  EXPECT_EQ(ds.encoding().label_values[0], "yes, really");
  EXPECT_EQ(ds.size(), 2);
}

TEST(LoadCsvTest, Errors) {
  EXPECT_EQ(CodeOf([] {
              LoadCsv(WriteFile("nolabel.csv", "a,s\n1,0\n2,1\n"), {"y", "s"});
            }),
            ErrorCode::kSchema);
  EXPECT_EQ(CodeOf([] {
              LoadCsv(WriteFile("nonnum.csv", "a,y,s\n1,0,0\nabc,1,1\n"),
                      {"y", "s"});
            }),
            ErrorCode::kParse);
  try {
    LoadCsv(WriteFile("nonnum2.csv", "a,y,s\n1,0,0\nabc,1,1\n"), {"y", "s"});
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
  EXPECT_EQ(CodeOf([] { LoadCsv(WriteFile("empty.csv", ""), {"y", "s"}); }),
            ErrorCode::kEmptyDataset);
  EXPECT_EQ(CodeOf([] { LoadCsv(WriteFile("header.csv", "a,y,s\n"), {"y", "s"}); }),
            ErrorCode::kEmptyDataset);
  // A single sensitive value violates k >= 2.
  EXPECT_EQ(CodeOf([] {
              LoadCsv(WriteFile("onegroup.csv", "a,y,s\n1,0,m\n2,1,m\n"),
                      {"y", "s"});
            }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([] {
              LoadCsv(std::filesystem::path(::testing::TempDir()) / "missing.csv",
                      {"y", "s"});
            }),
            ErrorCode::kIo);
}

TEST(LoadCsvTest, FixedEncodingRejectsUnknownValues) {
  Encoding enc;
  enc.label_values = {"b", "a"};
  enc.sensitive_values = {"f", "m"};
  const auto path = WriteFile("fixed.csv", "x,y,s\n1,a,m\n2,b,f\n");
  const TabularDataset ds = LoadCsv(path, {"y", "s"}, enc);
  EXPECT_EQ(ds.labels(), (std::vector<int>{1, 0}));
  EXPECT_EQ(ds.sensitive(), (std::vector<int>{1, 0}));
  const auto bad = WriteFile("fixed_bad.csv", "x,y,s\n1,c,m\n2,b,f\n");
  EXPECT_EQ(CodeOf([&] { LoadCsv(bad, {"y", "s"}, enc); }), ErrorCode::kParse);
}

TEST(LoadCsvTest, WriteCsvRoundTrips) {
  const TabularDataset ds = RandomDataset(30, 3, 3, 2, 5);
  const auto path = std::filesystem::path(::testing::TempDir()) / "rt.csv";
  WriteCsv(ds, path, {"label", "group"});
  const TabularDataset back = LoadCsv(path, {"label", "group"});
  EXPECT_EQ(back.size(), ds.size());
  EXPECT_TRUE(back.features().isApprox(ds.features(), 1e-15));
  // Raw values without an encoding are the codes themselves.
  for (int i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(std::stoi(back.encoding().label_values[back.label(i)]),
              ds.label(i));
    EXPECT_EQ(std::stoi(back.encoding().sensitive_values[back.group(i)]),
              ds.group(i));
  }
}

TEST(TrainTestSplitTest, SizesAndDeterminism) {
  const TabularDataset ds = RandomDataset(100, 2, 2, 2, 1);
  auto [train, test] = TrainTestSplit(ds, 0.25, 7);
  EXPECT_EQ(train.size(), 75);
  EXPECT_EQ(test.size(), 25);
  auto [train2, test2] = TrainTestSplit(ds, 0.25, 7);
  EXPECT_EQ(train.features(), train2.features());
  EXPECT_EQ(test.labels(), test2.labels());

  const TabularDataset four = RandomDataset(4, 1, 2, 2, 2);
  auto [a, b] = TrainTestSplit(four, 0.25, 3);
  EXPECT_EQ(a.size(), 3);
  EXPECT_EQ(b.size(), 1);

  EXPECT_THROW(TrainTestSplit(ds, 0.0, 1), Error);
  EXPECT_THROW(TrainTestSplit(ds, 1.0, 1), Error);
}

TEST(TrainTestSplitTest, PartitionIsDisjointAndComplete) {
  // Tag each row with its index in feature column 0.
  const int n = 57;
  RowMatrix x(n, 1);
  std::vector<int> y(n), s(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = i;
    y[i] = i % 2;
    s[i] = (i / 2) % 2;
  }
  const TabularDataset ds(x, y, s, 2, 2);
  for (uint64_t seed = 0; seed < 5; ++seed) {
    auto [train, test] = TrainTestSplit(ds, 0.3, seed);
    std::multiset<int> seen;
    for (int i = 0; i < train.size(); ++i) seen.insert(train.features()(i, 0));
    for (int i = 0; i < test.size(); ++i) seen.insert(test.features()(i, 0));
    ASSERT_EQ(seen.size(), static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) EXPECT_EQ(seen.count(i), 1u);
  }
}

TEST(SensitiveStatsTest, Examples) {
  const SensitiveStats a = ComputeSensitiveStats(std::vector<int>{0, 0, 1, 1}, 2);
  EXPECT_DOUBLE_EQ(a.probabilities[0], 0.5);
  EXPECT_DOUBLE_EQ(a.rho, 0.5);
  EXPECT_NEAR(a.inv_sqrt[0], 1.41421356, 1e-8);
  EXPECT_NEAR(a.inv_sqrt[1], 1.41421356, 1e-8);

  const SensitiveStats b = ComputeSensitiveStats(std::vector<int>{0, 0, 0, 1}, 2);
  EXPECT_DOUBLE_EQ(b.probabilities[0], 0.75);
  EXPECT_DOUBLE_EQ(b.rho, 0.25);
  EXPECT_NEAR(b.inv_sqrt[0], 1.15470054, 1e-8);
  EXPECT_NEAR(b.inv_sqrt[1], 2.0, 1e-15);

  EXPECT_EQ(CodeOf([] { ComputeSensitiveStats(std::vector<int>{0, 0, 0, 0}, 2); }),
            ErrorCode::kDegenerateGroup);
}

TEST(SensitiveStatsTest, InvariantsOnRandomData) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const TabularDataset ds = RandomDataset(50, 1, 2, 2 + seed % 4, seed);
    const SensitiveStats st = ComputeSensitiveStats(ds);
    double total = 0.0;
    int64_t count = 0;
    double rho = 1.0;
    for (int r = 0; r < st.num_groups(); ++r) {
      total += st.probabilities[r];
      count += st.counts[r];
      rho = std::min(rho, st.probabilities[r]);
      EXPECT_NEAR(st.inv_sqrt[r] * std::sqrt(st.probabilities[r]), 1.0, 1e-12);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(count, ds.size());
    EXPECT_DOUBLE_EQ(st.rho, rho);
  }
}

TEST(OneHotTest, Examples) {
  // Zero-based: index 1 of 4 is the second entry.
  EXPECT_EQ(OneHot(1, 4), (Eigen::Vector4d(0, 1, 0, 0)));
  EXPECT_EQ(OneHot(0, 1), (Eigen::VectorXd::Ones(1)));
  EXPECT_THROW(OneHot(4, 4), Error);
  EXPECT_THROW(OneHot(-1, 4), Error);
}

TEST(MinibatchTest, RangeAndErrors) {
  Rng rng(1);
  const std::vector<int> b = Minibatch(10, 10, rng);
  EXPECT_EQ(b.size(), 10u);
  for (int i : b) {
    EXPECT_GE(i, 0);
    EXPECT_LT(i, 10);
  }
  EXPECT_THROW(Minibatch(10, 11, rng), Error);
  EXPECT_THROW(Minibatch(10, 0, rng), Error);
}

TEST(MinibatchTest, StreamSemantics) {
  Rng a(42);
  Rng b(42);
  const std::vector<int> a1 = Minibatch(1000, 20, a);
  const std::vector<int> a2 = Minibatch(1000, 20, a);
  EXPECT_NE(a1, a2);
  EXPECT_EQ(a1, Minibatch(1000, 20, b));
  EXPECT_EQ(a2, Minibatch(1000, 20, b));
}

TEST(MinibatchTest, FullSizeDrawRepeats) {
  // A with-replacement draw of size n = 50 has a repeat with probability
  // 1 - 50!/50^50, indistinguishable from 1.
  Rng rng(3);
  std::vector<int> b = Minibatch(50, 50, rng);
  std::sort(b.begin(), b.end());
  EXPECT_NE(std::adjacent_find(b.begin(), b.end()), b.end());
}

TEST(MinibatchTest, UniformFrequencies) {
  Rng rng(9);
  const int draws = 100000;
  std::vector<int> counts(10, 0);
  for (int t = 0; t < draws / 10; ++t) {
    for (int i : Minibatch(10, 10, rng)) ++counts[i];
  }
  const double se = std::sqrt(0.1 * 0.9 / draws);
  for (int c : counts) {
    EXPECT_NEAR(static_cast<double>(c) / draws, 0.1, 3.0 * se);
  }
}

TEST(MinibatchTest, WithoutReplacementIsDistinct) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<int> b = MinibatchWithoutReplacement(20, 15, rng);
    std::sort(b.begin(), b.end());
    EXPECT_EQ(std::adjacent_find(b.begin(), b.end()), b.end());
    EXPECT_GE(b.front(), 0);
    EXPECT_LT(b.back(), 20);
  }
}

TEST(AdjacentSensitiveTest, Examples) {
  const TabularDataset ds = Tiny({0, 0, 1, 1});
  const TabularDataset adj = AdjacentSensitive(ds, 2, 0);
  int differing = 0;
  for (int i = 0; i < ds.size(); ++i) differing += ds.group(i) != adj.group(i);
  EXPECT_EQ(differing, 1);
  EXPECT_EQ(adj.features(), ds.features());
  EXPECT_EQ(adj.labels(), ds.labels());
  EXPECT_DOUBLE_EQ(ComputeSensitiveStats(adj).rho, 0.25);

  EXPECT_EQ(CodeOf([&] { AdjacentSensitive(ds, 2, 1); }),
            ErrorCode::kInvalidArgument);
  const TabularDataset lonely = Tiny({0, 0, 0, 1});
  EXPECT_EQ(CodeOf([&] { AdjacentSensitive(lonely, 3, 0); }),
            ErrorCode::kDegenerateGroup);
}

TEST(AdjacentSensitiveTest, RhoMovesByAtMostOneOverN) {
  Rng rng(5);
  for (uint64_t seed = 0; seed < 30; ++seed) {
    const TabularDataset ds = RandomDataset(40, 1, 2, 3, seed);
    const double rho = ComputeSensitiveStats(ds).rho;
    std::uniform_int_distribution<int> row(0, ds.size() - 1);
    const int i = row(rng);
    const int g = (ds.group(i) + 1 + seed % 2) % 3;
    try {
      const double rho2 = ComputeSensitiveStats(AdjacentSensitive(ds, i, g)).rho;
      EXPECT_LE(std::abs(rho2 - rho), 1.0 / ds.size() + 1e-15);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kDegenerateGroup);
    }
  }
}

}  // namespace
}  // namespace dpfermi
