//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <set>

#include "smipred/hpo/search.hpp"

using namespace smipred;

TEST_CASE("search space enumerations") {
  auto cnn = SearchSpace::for_arch(ArchClass::CnnGru);
  CHECK(cnn.grid_size() == 6u * 48u * 48u * 48u);  // 663,552
  auto plain = SearchSpace::for_arch(ArchClass::Gru);
  CHECK(plain.grid_size() == 6u * 48u * 48u);

  // flat <-> params round trip
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const std::size_t flat = rng.uniform_int(cnn.grid_size());
    const HyperParams hp = cnn.params_from_flat(flat);
    CHECK(cnn.contains(hp));
    CHECK(cnn.flat_from_params(hp) == flat);
    CHECK_NOTHROW(validate_hyperparams(ArchClass::CnnGru, hp));
  }
}

TEST_CASE("six manual seed designs") {
  auto cnn_seeds = seed_trials(ArchClass::CnnGru);
  REQUIRE(cnn_seeds.size() == 6);
  CHECK(cnn_seeds[0] == HyperParams{40, 16, 8, 8});
  const int units[6] = {8, 16, 32, 64, 128, 256};
  auto space = SearchSpace::for_arch(ArchClass::CnnGru);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(cnn_seeds[i].em_size == 40);
    CHECK(cnn_seeds[i].conv_filters == 16);
    CHECK(cnn_seeds[i].rnn1_units == units[i]);
    CHECK(cnn_seeds[i].rnn2_units == units[i]);
    CHECK(space.contains(cnn_seeds[i]));  // all seeds lie on the grid
  }
  // plain classes carry no conv parameter
  for (const auto& s : seed_trials(ArchClass::Lstm)) CHECK(s.conv_filters == 0);
}

TEST_CASE("gp posterior passes through observations") {
  // smooth 2-d function, noiseless observations
  Rng rng(11);
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (int i = 0; i < 25; ++i) {
    std::vector<double> x{rng.uniform(), rng.uniform()};
    ys.push_back(std::sin(3.0 * x[0]) + 0.5 * x[1] * x[1]);
    xs.push_back(std::move(x));
  }
  GaussianProcess gp;
  gp.fit(xs, ys);

  // posterior mean at an observed point within 2 posterior stddev
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double mean, var;
    gp.posterior_point(xs[i], mean, var);
    CHECK(std::abs(mean - ys[i]) <= 2.0 * std::sqrt(var) + 1e-6);
  }

  // interpolation quality on held-out points of a smooth function
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x{rng.uniform(), rng.uniform()};
    const double truth = std::sin(3.0 * x[0]) + 0.5 * x[1] * x[1];
    double mean, var;
    gp.posterior_point(x, mean, var);
    worst = std::max(worst, std::abs(mean - truth));
  }
  CHECK(worst < 0.25);

  // EI at a noiseless observed point is ~0 (no expected gain at the best)
  double best = *std::min_element(ys.begin(), ys.end());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double mean, var;
    gp.posterior_point(xs[i], mean, var);
    if (ys[i] == best)
      CHECK(expected_improvement(mean, var, best) < 0.05);
  }
}

TEST_CASE("suggest returns untried on-grid points and exhausts cleanly") {
  // tiny space: restrict to GRU grid by monkeying the dims
  SearchSpace space;
  space.arch = ArchClass::Gru;
  space.dims = {{"em_size", 10, 20, 10},
                {"rnn1_units", 8, 16, 8},
                {"rnn2_units", 8, 16, 8}};
  REQUIRE(space.grid_size() == 8);

  Rng rng(7);
  std::vector<SurrogatePoint> history;
  std::set<std::size_t> tried;
  for (int k = 0; k < 8; ++k) {
    HyperParams hp = suggest(history, tried, space, rng);
    const std::size_t flat = space.flat_from_params(hp);
    CHECK(tried.count(flat) == 0);
    CHECK(space.contains(hp));
    tried.insert(flat);
    SurrogatePoint pt;
    pt.x.resize(3);
    space.normalize(hp, pt.x.data());
    pt.objective = static_cast<double>(flat % 3);
    history.push_back(pt);
  }
  // grid exhausted
  CHECK_THROWS_AS(suggest(history, tried, space, rng), Error);

  // with exactly one untried point left, that point is returned
  tried.erase(5);
  history.pop_back();
  HyperParams last = suggest(history, tried, space, rng);
  CHECK(space.flat_from_params(last) == 5);
}

namespace {

// Deterministic mock objective over the full grid: smooth bowl with a known
// optimum, no model training involved.
ObjectiveFn mock_objective(const SearchSpace& space, double noise_test) {
  return [space, noise_test](const HyperParams& hp) {
    double x[4];
    space.normalize(hp, x);
    const std::size_t d = space.dims.size();
    double v = 0.0;
    const double target[4] = {0.7, 0.25, 0.55, 0.4};
    for (std::size_t i = 0; i < d; ++i)
      v += (x[i] - target[i]) * (x[i] - target[i]);
    v += 0.1 * std::sin(7.0 * x[0]) * std::sin(5.0 * x[d - 1]);
    ObjectiveResult res;
    res.val_metric = v;
    res.test_metric = v + noise_test * std::sin(13.0 * x[0]);
    return res;
  };
}

}  // namespace

TEST_CASE("one-dimensional restriction finds the optimum") {
  // f(u) = -(u - 200)^2 over the rnn grid; minimize the negated form
  SearchSpace space;
  space.arch = ArchClass::Gru;
  space.dims = {{"rnn1_units", 8, 384, 8}};
  auto objective = [&](const HyperParams& hp) {
    const double u = hp.rnn1_units;
    ObjectiveResult res;
    res.val_metric = (u - 200.0) * (u - 200.0);
    res.test_metric = res.val_metric;
    return res;
  };

  int hits = 0;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    Rng rng(derive_seed(rep, "1d"));
    std::set<std::size_t> tried;
    std::vector<SurrogatePoint> history;
    double best = std::numeric_limits<double>::infinity();
    int best_u = -1;
    // 6 seed-ish random starts + 20 suggestions
    for (int t = 0; t < 26; ++t) {
      HyperParams hp;
      if (t < 6) {
        std::size_t flat;
        do {
          flat = rng.uniform_int(space.grid_size());
        } while (tried.count(flat));
        hp = space.params_from_flat(flat);
      } else {
        hp = suggest(history, tried, space, rng);
      }
      tried.insert(space.flat_from_params(hp));
      auto res = objective(hp);
      SurrogatePoint pt;
      pt.x.resize(1);
      space.normalize(hp, pt.x.data());
      pt.objective = res.val_metric;
      history.push_back(pt);
      if (res.val_metric < best) {
        best = res.val_metric;
        best_u = hp.rnn1_units;
      }
    }
    if (std::abs(best_u - 200) <= 8) ++hits;
  }
  CHECK(hits >= 18);
}

TEST_CASE("run_search budget, ledger and resume") {
  const SearchSpace space = SearchSpace::for_arch(ArchClass::Gru);
  auto obj = mock_objective(space, 0.05);
  const std::string ledger = "hpo_ledger_test.jsonl";
  std::remove(ledger.c_str());

  SearchConfig cfg;
  cfg.n_trials = 6;
  cfg.seed = 99;
  cfg.ledger_path = ledger;
  auto r6 = run_search(ArchClass::Gru, obj, cfg);
  REQUIRE(r6.trials.size() == 6);
  // exactly the six seed designs in order
  const auto seeds = seed_trials(ArchClass::Gru);
  for (std::size_t i = 0; i < 6; ++i) CHECK(r6.trials[i].params == seeds[i]);

  // resume adds trials without duplicating any design
  cfg.n_trials = 14;
  auto r14 = run_search(ArchClass::Gru, obj, cfg);
  REQUIRE(r14.trials.size() == 14);
  std::set<std::size_t> flats;
  for (const auto& t : r14.trials) {
    CHECK(space.contains(t.params));
    CHECK(flats.insert(space.flat_from_params(t.params)).second);
  }
  CHECK(r14.has_best);

  // the ledger holds exactly the 14 lines
  CHECK(read_ledger(ledger).size() == 14);
  std::remove(ledger.c_str());
}

TEST_CASE("failed trials never reach the surrogate but spend budget") {
  int calls = 0;
  auto obj = [&calls](const HyperParams&) {
    ++calls;
    ObjectiveResult res;
    if (calls % 2 == 0) {
      res.ok = false;
      res.error = "synthetic failure";
      return res;
    }
    res.val_metric = 1.0;
    res.test_metric = 1.0;
    return res;
  };
  SearchConfig cfg;
  cfg.n_trials = 10;
  cfg.seed = 5;
  auto rep = run_search(ArchClass::Gru, obj, cfg);
  CHECK(rep.trials.size() == 10);
  int failed = 0;
  for (const auto& t : rep.trials) failed += t.status == "failed";
  CHECK(failed == 5);
}

TEST_CASE("reproducible trial sequence under a fixed master seed") {
  const SearchSpace space = SearchSpace::for_arch(ArchClass::CnnGru);
  auto obj = mock_objective(space, 0.02);
  SearchConfig cfg;
  cfg.n_trials = 12;
  cfg.seed = 4242;
  auto a = run_search(ArchClass::CnnGru, obj, cfg);
  auto b = run_search(ArchClass::CnnGru, obj, cfg);
  REQUIRE(a.trials.size() == b.trials.size());
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    CHECK(a.trials[i].params == b.trials[i].params);
    CHECK(a.trials[i].objective == b.trials[i].objective);
  }
}

TEST_CASE("val_test_correlation on trial lists") {
  SearchReport rep;
  for (int i = 0; i < 10; ++i) {
    Trial t;
    t.val_metric = i;
    t.test_metric = i;  // identical series
    rep.trials.push_back(t);
  }
  CHECK(rep.val_test_correlation() == Catch::Approx(1.0));
  for (auto& t : rep.trials) t.test_metric = -t.val_metric;
  CHECK(rep.val_test_correlation() == Catch::Approx(-1.0));

  SearchReport tiny;
  tiny.trials.resize(2);
  CHECK_THROWS_AS(tiny.val_test_correlation(), Error);
}
