//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "smipred/metrics.hpp"
#include "smipred/rng.hpp"

using namespace smipred;

namespace {

// O(n^2) pairwise oracle: P(s+ > s-) + 0.5 P(tie), counted directly.
double auc_pairwise_oracle(const std::vector<double>& s,
                           const std::vector<int>& l) {
  double num = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (l[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[j] != 0) continue;
      ++pairs;
      if (s[i] > s[j])
        num += 1.0;
      else if (s[i] == s[j])
        num += 0.5;
    }
  }
  return num / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("auc on separable and degenerate inputs") {
  std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  std::vector<int> l{0, 0, 1, 1};
  CHECK(evaluate_auc(s, l) == 1.0);

  // all scores identical: every pair ties, auc = 0.5
  std::vector<double> same{0.3, 0.3, 0.3, 0.3};
  CHECK(evaluate_auc(same, l) == 0.5);

  std::vector<int> ones{1, 1, 1, 1};
  CHECK_THROWS_AS(evaluate_auc(s, ones), Error);
}

TEST_CASE("auc equals the pairwise oracle on 1000 random instances") {
  Rng rng(101);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(199);
    std::vector<double> s(n);
    std::vector<int> l(n);
    bool has0 = false, has1 = false;
    for (std::size_t i = 0; i < n; ++i) {
      // quantized scores force plenty of ties
      s[i] = std::floor(rng.uniform(0.0, 10.0)) / 10.0;
      l[i] = rng.uniform() < 0.4 ? 1 : 0;
      has0 |= l[i] == 0;
      has1 |= l[i] == 1;
    }
    if (!has0) l[0] = 0;
    if (!has1) l[n - 1] = 1;
    const double fast = evaluate_auc(s, l);
    const double slow = auc_pairwise_oracle(s, l);
    REQUIRE(std::abs(fast - slow) < 1e-12);
  }
}

TEST_CASE("auc is invariant under strictly monotone transforms") {
  Rng rng(103);
  std::vector<double> s(60);
  std::vector<int> l(60);
  for (std::size_t i = 0; i < 60; ++i) {
    s[i] = rng.normal();
    l[i] = i % 3 == 0 ? 1 : 0;
  }
  const double base = evaluate_auc(s, l);
  std::vector<double> t(60);
  for (std::size_t i = 0; i < 60; ++i) t[i] = std::exp(2.0 * s[i]) + 5.0;
  CHECK(evaluate_auc(t, l) == Catch::Approx(base).margin(1e-14));
}

TEST_CASE("auc complement under score negation without ties") {
  Rng rng(105);
  std::vector<double> s(50);
  std::vector<int> l(50);
  for (std::size_t i = 0; i < 50; ++i) {
    s[i] = rng.uniform();  // continuous, ties have probability ~0
    l[i] = i < 20 ? 1 : 0;
  }
  std::vector<double> neg(50);
  for (std::size_t i = 0; i < 50; ++i) neg[i] = -s[i];
  CHECK(evaluate_auc(neg, l) ==
        Catch::Approx(1.0 - evaluate_auc(s, l)).margin(1e-12));
}

TEST_CASE("multitask auc skips single-class tasks") {
  std::vector<std::vector<double>> scores{{0.9, 0.1, 0.8, 0.2},
                                          {0.5, 0.6, 0.7, 0.4}};
  std::vector<std::vector<int>> labels{{1, 0, 1, 0}, {1, 1, -1, 1}};
  // task 1 has only positives (and one missing), so only task 0 counts
  CHECK(evaluate_auc_multitask(scores, labels) == 1.0);

  std::vector<std::vector<int>> alldegen{{1, 1, 1, 1}, {0, 0, 0, 0}};
  CHECK_THROWS_AS(evaluate_auc_multitask(scores, alldegen), Error);
}

TEST_CASE("rmse and mae analytic cases and oracles") {
  std::vector<double> p{1.0, 2.0};
  CHECK(evaluate_rmse(p, p) == 0.0);
  std::vector<double> t2{-2.0, 6.0};  // residuals 3, -4
  CHECK(evaluate_rmse(p, t2) == Catch::Approx(std::sqrt(25.0 / 2.0)));
  std::vector<double> t3{0.0, 3.0};  // residuals 1, -1
  CHECK(evaluate_mae(p, t3) == 1.0);
  CHECK_THROWS_AS(evaluate_rmse({}, {}), Error);

  Rng rng(107);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(100);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.normal() * 3.0;
      b[i] = rng.normal() * 3.0;
    }
    double sq = 0.0, ab = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sq += (a[i] - b[i]) * (a[i] - b[i]);
      ab += std::abs(a[i] - b[i]);
    }
    REQUIRE(std::abs(evaluate_rmse(a, b) -
                     std::sqrt(sq / static_cast<double>(n))) < 1e-12);
    REQUIRE(std::abs(evaluate_mae(a, b) - ab / static_cast<double>(n)) <
            1e-12);
  }
}

TEST_CASE("pearson analytic cases and oracle") {
  std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  CHECK(pearson(x, x) == Catch::Approx(1.0));
  std::vector<double> nx{-1.0, -2.0, -3.0, -4.0};
  CHECK(pearson(x, nx) == Catch::Approx(-1.0));
  std::vector<double> flat{2.0, 2.0, 2.0, 2.0};
  CHECK_THROWS_AS(pearson(x, flat), Error);

  Rng rng(109);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + rng.uniform_int(60);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.normal();
      b[i] = 0.3 * a[i] + rng.normal();
    }
    // direct-formula oracle
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ma += a[i];
      mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
    REQUIRE(std::abs(pearson(a, b) - sab / std::sqrt(saa * sbb)) < 1e-12);
  }
}
