// Copyright 2026 The idexpo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OR CONDITIONS OF ANY KIND, either express
// or implied. See the License for the specific language governing permissions
// and limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "idexpo/dataset.hpp"
#include "support/test_util.hpp"

using namespace idexpo;
using idexpo_test::TempDir;
using idexpo_test::write_file;

TEST_CASE("load_csv: wine-shaped file round-trips with expected dimensions") {
  TempDir tmp("data_wine");
  Dataset gen = make_synthetic_classification("wine-quality-red-synthetic", 1599, 12, 6, 0);
  save_csv(gen, tmp.path("wine.csv"));
  Dataset ds = load_csv(tmp.path("wine.csv"));
  CHECK(ds.num_samples() == 1599);
  CHECK(ds.num_features() == 12);
  CHECK(ds.num_classes == 6);
  CHECK(ds.name == "wine");
  for (int r = 0; r < ds.num_samples(); ++r) CHECK(ds.y[r] == gen.y[r]);
  for (size_t i = 0; i < ds.x.size(); ++i) CHECK(ds.x[i] == gen.x[i]);
}

TEST_CASE("load_csv: collins-shaped file") {
  TempDir tmp("data_collins");
  Dataset gen = make_synthetic_classification("collins-synthetic", 500, 23, 2, 1);
  save_csv(gen, tmp.path("collins.csv"));
  Dataset ds = load_csv(tmp.path("collins.csv"));
  CHECK(ds.num_samples() == 500);
  CHECK(ds.num_features() == 23);
  CHECK(ds.num_classes == 2);
}

TEST_CASE("load_csv: loading the same file twice gives identical content hash") {
  TempDir tmp("data_hash");
  std::string csv = "a,b,label\n1.5,2.0,1\n0.25,-3.5,0\n4,4,1\n";
  write_file(tmp.path("t.csv"), csv);
  Dataset d1 = load_csv(tmp.path("t.csv"));
  Dataset d2 = load_csv(tmp.path("t.csv"));
  CHECK(d1.hash == d2.hash);
  CHECK(d1.hash == bytes_hash(csv));
  CHECK(d1.hash == file_hash(tmp.path("t.csv")));
}

TEST_CASE("load_csv: labels are remapped to dense 0..L-1 by sorted value") {
  TempDir tmp("data_remap");
  write_file(tmp.path("t.csv"), "a,label\n1,9\n2,3\n3,5\n4,3\n");
  Dataset ds = load_csv(tmp.path("t.csv"));
  CHECK(ds.num_classes == 3);
  CHECK(ds.original_labels == std::vector<double>{3.0, 5.0, 9.0});
  CHECK(ds.y == std::vector<int>{2, 0, 1, 0});
}

TEST_CASE("load_csv: malformed cells are rejected with their location") {
  TempDir tmp("data_bad");
  write_file(tmp.path("nonnum.csv"), "a,b,label\n1,x,0\n");
  CHECK_THROWS_WITH_AS(load_csv(tmp.path("nonnum.csv")),
                       doctest::Contains("row 2, column 2"), IngestError);
  write_file(tmp.path("missing.csv"), "a,b,label\n1,,0\n");
  CHECK_THROWS_WITH_AS(load_csv(tmp.path("missing.csv")),
                       doctest::Contains("missing value"), IngestError);
  write_file(tmp.path("floatlab.csv"), "a,b,label\n1,2,0.5\n");
  CHECK_THROWS_WITH_AS(load_csv(tmp.path("floatlab.csv")),
                       doctest::Contains("not an integer"), IngestError);
  write_file(tmp.path("ragged.csv"), "a,b,label\n1,2\n");
  CHECK_THROWS_AS(load_csv(tmp.path("ragged.csv")), IngestError);
}

TEST_CASE("make_splits: documented sizes for N=1599 and N=10") {
  auto splits = make_splits(1599, 0);
  REQUIRE(splits.size() == 5);
  for (const auto& s : splits) {
    CHECK(s.train.size() == 1119);
    CHECK(s.val.size() == 160);
    CHECK(s.test.size() == 320);
  }
  auto small = make_splits(10, 0);
  for (const auto& s : small) {
    CHECK(s.train.size() == 7);
    CHECK(s.val.size() == 1);
    CHECK(s.test.size() == 2);
  }
}

TEST_CASE("make_splits: same master seed reproduces identical splits") {
  auto a = make_splits(731, 42);
  auto b = make_splits(731, 42);
  for (int k = 0; k < 5; ++k) {
    CHECK(a[k].train == b[k].train);
    CHECK(a[k].val == b[k].val);
    CHECK(a[k].test == b[k].test);
  }
  auto c = make_splits(731, 43);
  CHECK(a[0].train != c[0].train);
}

TEST_CASE("make_splits: sizes that leave a partition empty are rejected") {
  CHECK_THROWS_AS(make_splits(2, 0), IngestError);
  CHECK_THROWS_AS(make_splits(3, 0), IngestError);
  CHECK_THROWS_AS(make_splits(4, 0), IngestError);
  CHECK_NOTHROW(make_splits(5, 0));
}

TEST_CASE("property: splits partition the index range for many N") {
  for (int n : {5, 10, 57, 128, 500, 1599, 2000}) {
    auto splits = make_splits(n, uint64_t(n));
    for (const auto& s : splits) {
      std::set<int> seen;
      for (int i : s.train) seen.insert(i);
      for (int i : s.val) seen.insert(i);
      for (int i : s.test) seen.insert(i);
      CHECK(int(seen.size()) == n);
      CHECK(s.train.size() + s.val.size() + s.test.size() == size_t(n));
      CHECK(*seen.begin() == 0);
      CHECK(*seen.rbegin() == n - 1);
    }
  }
}

TEST_CASE("standardize: train columns become mean zero, unit variance") {
  Dataset ds = make_synthetic_classification("std", 400, 7, 3, 3);
  auto split = make_splits(ds, 9)[0];
  auto [out, st] = standardize(ds, split);
  CHECK(out.num_features() == 7);
  CHECK(st.dropped.empty());
  for (int c = 0; c < out.num_features(); ++c) {
    double m = 0.0;
    for (int i : split.train) m += out.x.at(i, c);
    m /= double(split.train.size());
    double v = 0.0;
    for (int i : split.train) {
      double d = out.x.at(i, c) - m;
      v += d * d;
    }
    v /= double(split.train.size());
    CHECK(std::abs(m) < 1e-10);
    CHECK(std::abs(v - 1.0) < 1e-8);
  }
}

TEST_CASE("standardize: constant features are dropped and recorded") {
  TempDir tmp("data_const");
  std::ostringstream csv;
  csv << "a,c,b,label\n";
  for (int i = 0; i < 40; ++i) {
    csv << i * 0.5 << ",7.25," << (40 - i) * 0.25 << "," << i % 2 << "\n";
  }
  write_file(tmp.path("c.csv"), csv.str());
  Dataset ds = load_csv(tmp.path("c.csv"));
  auto split = make_splits(ds, 1)[0];
  auto [out, st] = standardize(ds, split);
  CHECK(out.num_features() == 2);
  CHECK(st.dropped == std::vector<int>{1});
  CHECK(st.kept == std::vector<int>{0, 2});
  CHECK(out.dropped_features == std::vector<int>{1});
  CHECK(out.feature_names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("standardize: inverse transform restores the original matrix") {
  Dataset ds = make_synthetic_classification("inv", 200, 5, 2, 4);
  auto split = make_splits(ds, 2)[0];
  auto [out, st] = standardize(ds, split);
  Tensor back = st.inverse(out.x);
  REQUIRE(back.same_shape(ds.x));
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(std::abs(back[i] - ds.x[i]) < 1e-10);
  }
}

TEST_CASE("property: standardizer ignores validation and test rows") {
  Dataset ds = make_synthetic_classification("leak", 300, 6, 3, 5);
  auto split = make_splits(ds, 3)[0];
  auto [out1, st1] = standardize(ds, split);
  Dataset mutated = ds;
  for (int i : split.val) {
    for (int c = 0; c < ds.num_features(); ++c) mutated.x.at(i, c) += 100.0;
  }
  for (int i : split.test) {
    for (int c = 0; c < ds.num_features(); ++c) mutated.x.at(i, c) -= 55.0;
  }
  auto [out2, st2] = standardize(mutated, split);
  CHECK(st1.mean == st2.mean);
  CHECK(st1.stdev == st2.stdev);
  for (int i : split.train) {
    for (int c = 0; c < out1.num_features(); ++c) {
      CHECK(out1.x.at(i, c) == out2.x.at(i, c));
    }
  }
}

TEST_CASE("background: raw feature means over the train split") {
  TempDir tmp("data_bg");
  write_file(tmp.path("b.csv"), "a,b,label\n1,10,0\n3,20,1\n5,60,0\n7,-2,1\n");
  Dataset ds = load_csv(tmp.path("b.csv"));
  SplitSpec split;
  split.train = {0, 2};
  split.val = {1};
  split.test = {3};
  auto b = background(ds, split);
  REQUIRE(b.size() == 2);
  CHECK(b[0] == doctest::Approx(3.0));
  CHECK(b[1] == doctest::Approx(35.0));
}

TEST_CASE("background: near-zero after standardization") {
  Dataset ds = make_synthetic_classification("bg0", 250, 8, 4, 6);
  auto split = make_splits(ds, 4)[0];
  auto [out, st] = standardize(ds, split);
  auto b = background(out, split);
  REQUIRE(int(b.size()) == out.num_features());
  for (double v : b) CHECK(std::abs(v) < 1e-10);
}

TEST_CASE("synthetic generator: deterministic and class-complete") {
  Dataset a = make_synthetic_classification("s", 300, 9, 5, 11);
  Dataset b = make_synthetic_classification("s", 300, 9, 5, 11);
  CHECK(a.hash == b.hash);
  for (size_t i = 0; i < a.x.size(); ++i) CHECK(a.x[i] == b.x[i]);
  CHECK(a.y == b.y);
  std::set<int> classes(a.y.begin(), a.y.end());
  CHECK(int(classes.size()) == 5);
  Dataset c = make_synthetic_classification("s", 300, 9, 5, 12);
  CHECK(a.hash != c.hash);
}
