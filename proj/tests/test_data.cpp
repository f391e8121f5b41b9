//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <fstream>
#include <set>

#include "smipred/data.hpp"

using namespace smipred;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  std::ofstream out(name, std::ios::binary);
  out << content;
  return name;
}

// Synthetic classification dataset with a controllable positive count.
Dataset fake_classification(std::size_t n, std::size_t n_pos) {
  Dataset ds;
  ds.name = "fake";
  ds.task = {TaskType::Classification, 1};
  ds.label_names = {"y"};
  for (std::size_t i = 0; i < n; ++i) {
    DataRecord r;
    r.smiles = "C" + std::string(i % 7 + 1, 'C') + std::to_string(i);
    r.labels = {i < n_pos ? 1.0 : 0.0};
    r.present = {1};
    ds.records.push_back(std::move(r));
  }
  return ds;
}

Dataset fake_regression(std::size_t n) {
  Dataset ds;
  ds.name = "fake";
  ds.task = {TaskType::Regression, 1};
  ds.label_names = {"y"};
  for (std::size_t i = 0; i < n; ++i) {
    DataRecord r;
    r.smiles = "N" + std::to_string(i);
    r.labels = {static_cast<double>(i)};
    r.present = {1};
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace

TEST_CASE("load_csv accepts well-formed rows and filters bad ones") {
  const auto path = write_temp(
      "data_basic.csv",
      "smiles,logS\n"
      "CCO,-0.5\n"
      "c1ccncc1,1.1\n"
      "CC(C)O,-0.2\n");
  auto ds = load_csv(path, {TaskType::Regression, 1});
  CHECK(ds.size() == 3);
  CHECK(ds.label_names == std::vector<std::string>{"logS"});
  CHECK(ds.records[1].labels[0] == 1.1);
  std::remove(path.c_str());
}

TEST_CASE("load_csv drops overlong, invalid and duplicate SMILES") {
  std::string longsmi(251, 'C');
  const auto path = write_temp("data_drop.csv",
                               "smiles,y\n" + longsmi +
                                   ",1.0\n"
                                   "C(C,2.0\n"
                                   "CCO,3.0\n"
                                   "CCO,4.0\n");
  auto ds = load_csv(path, {TaskType::Regression, 1});
  CHECK(ds.size() == 1);
  CHECK(ds.stats.dropped_long == 1);
  CHECK(ds.stats.dropped_invalid == 1);
  CHECK(ds.stats.collapsed_duplicates == 1);
  std::remove(path.c_str());
}

TEST_CASE("load_csv error paths") {
  const auto p1 = write_temp("data_nosmiles.csv", "a,b\n1,2\n");
  CHECK_THROWS_AS(load_csv(p1, {TaskType::Regression, 1}), IoError);
  std::remove(p1.c_str());

  const auto p2 = write_temp("data_badnum.csv", "smiles,y\nCCO,abc\n");
  CHECK_THROWS_WITH(load_csv(p2, {TaskType::Regression, 1}),
                    Catch::Matchers::ContainsSubstring("row 2"));
  std::remove(p2.c_str());

  // quoted fields with embedded commas parse fine
  const auto p3 = write_temp("data_quoted.csv",
                             "smiles,name,y\n"
                             "CCO,\"ethanol, neat\",0.5\n");
  auto ds = load_csv(p3, {TaskType::Regression, 1}, {{"y"}, "q"});
  CHECK(ds.size() == 1);
  std::remove(p3.c_str());

  // missing labels are masked for classification
  const auto p4 = write_temp("data_missing.csv",
                             "smiles,t1,t2\n"
                             "CCO,1,\n"
                             "CCN,,0\n");
  auto cls = load_csv(p4, {TaskType::Classification, 2});
  REQUIRE(cls.size() == 2);
  CHECK(cls.records[0].present == std::vector<std::uint8_t>{1, 0});
  CHECK(cls.records[1].present == std::vector<std::uint8_t>{0, 1});
  std::remove(p4.c_str());
}

TEST_CASE("split sizes follow round(n * fraction) with round-robin folds") {
  auto ds = fake_regression(1000);
  SplitPlan plan{0.1, 5, 123};
  auto split = make_splits(ds, plan);
  CHECK(split.test.size() == 100);
  for (const auto& f : split.folds) CHECK(f.validation.size() == 180);

  // FreeSolv-sized case: 643 -> 64 test, 579 across folds
  auto ds2 = fake_regression(643);
  auto split2 = make_splits(ds2, plan);
  CHECK(split2.test.size() == 64);
  std::size_t covered = 0;
  for (const auto& f : split2.folds) covered += f.validation.size();
  CHECK(covered == 579);
}

TEST_CASE("same seed reproduces byte-identical splits") {
  auto ds = fake_classification(400, 60);
  SplitPlan plan{1.0 / 6.0, 5, 777};
  auto a = make_splits(ds, plan);
  auto b = make_splits(ds, plan);
  CHECK(split_manifest(a, plan).dump() == split_manifest(b, plan).dump());
  SplitPlan other = plan;
  other.seed = 778;
  auto c = make_splits(ds, other);
  CHECK(split_manifest(a, plan).dump() != split_manifest(c, other).dump());
}

TEST_CASE("no index leaks across test, validation and training originals") {
  auto ds = fake_classification(300, 45);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto split = make_splits(ds, SplitPlan{1.0 / 6.0, 5, seed});
    std::set<std::size_t> test(split.test.begin(), split.test.end());
    std::set<std::size_t> all_val;
    for (const auto& f : split.folds) {
      std::set<std::size_t> val(f.validation.begin(), f.validation.end());
      for (std::size_t v : val) {
        REQUIRE(test.count(v) == 0);
        REQUIRE(all_val.count(v) == 0);  // folds mutually disjoint
      }
      // originals in training (dedup the oversampled multiset)
      std::set<std::size_t> train(f.train.begin(), f.train.end());
      for (std::size_t t : train) {
        REQUIRE(test.count(t) == 0);
        REQUIRE(val.count(t) == 0);
      }
      // coverage: test + val + train = everything
      CHECK(test.size() + val.size() + train.size() == ds.size());
      all_val.insert(val.begin(), val.end());
    }
    // fold validations cover the non-test remainder
    CHECK(all_val.size() + test.size() == ds.size());
  }
}

TEST_CASE("oversampling duplicates the minority class by the ratio") {
  // 90/10: ratio 9, each minority appears 9x, classes balance exactly
  {
    auto ds = fake_classification(100, 10);
    ResampledFold fold;
    for (std::size_t i = 0; i < 100; ++i) fold.train.push_back(i);
    oversample_minority(fold, ds, 0);
    std::size_t pos = 0, neg = 0;
    for (auto i : fold.train) (ds.records[i].labels[0] > 0.5 ? pos : neg)++;
    CHECK(pos == 90);
    CHECK(neg == 90);
    CHECK(fold.class_ratio_after == Catch::Approx(1.0));
    // provenance covers exactly the appended duplicates
    CHECK(fold.duplicate_provenance.size() == 80);
    for (const auto& [at, orig] : fold.duplicate_provenance)
      CHECK(fold.train[at] == orig);
  }
  // 50/50: unchanged
  {
    auto ds = fake_classification(100, 50);
    ResampledFold fold;
    for (std::size_t i = 0; i < 100; ++i) fold.train.push_back(i);
    oversample_minority(fold, ds, 0);
    CHECK(fold.train.size() == 100);
    CHECK(fold.duplicate_provenance.empty());
  }
  // 70/30: ratio round(2.33) = 2, minority doubled, 70/60 afterwards
  {
    auto ds = fake_classification(100, 30);
    ResampledFold fold;
    for (std::size_t i = 0; i < 100; ++i) fold.train.push_back(i);
    oversample_minority(fold, ds, 0);
    std::size_t pos = 0;
    for (auto i : fold.train) pos += ds.records[i].labels[0] > 0.5;
    CHECK(pos == 60);
    CHECK(fold.class_ratio_after >= 0.5);
    CHECK(fold.class_ratio_after <= 2.0);
  }
  // a class with zero members is an error
  {
    auto ds = fake_classification(50, 0);
    ResampledFold fold;
    for (std::size_t i = 0; i < 50; ++i) fold.train.push_back(i);
    CHECK_THROWS_AS(oversample_minority(fold, ds, 0), Error);
  }
}

TEST_CASE("oversampled class ratio stays within [0.5, 2] across seeds") {
  for (std::size_t n_pos : {11u, 23u, 37u, 61u, 83u}) {
    auto ds = fake_classification(240, n_pos);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto split = make_splits(ds, SplitPlan{1.0 / 6.0, 5, seed});
      for (const auto& f : split.folds) {
        CHECK(f.class_ratio_after >= 0.5);
        CHECK(f.class_ratio_after <= 2.0);
      }
    }
  }
}

TEST_CASE("regression splits skip oversampling") {
  auto ds = fake_regression(200);
  auto split = make_splits(ds, SplitPlan{0.1, 5, 5});
  for (const auto& f : split.folds) {
    CHECK(f.duplicate_provenance.empty());
    std::set<std::size_t> uniq(f.train.begin(), f.train.end());
    CHECK(uniq.size() == f.train.size());
  }
}

TEST_CASE("degenerate single-class stratification is an error") {
  auto ds = fake_classification(100, 0);
  CHECK_THROWS_AS(make_splits(ds, SplitPlan{0.1, 5, 1}), Error);
}

TEST_CASE("splits reject tiny datasets") {
  auto ds = fake_regression(40);
  CHECK_THROWS_AS(make_splits(ds, SplitPlan{0.1, 5, 1}), Error);
}
