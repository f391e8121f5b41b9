//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
// Sequential model-based search over the discrete hyperparameter grid: six
// manual seed designs, then GP-EI suggestions. The surrogate input type
// carries no test metric, so test data cannot influence suggestions.
#pragma once

#include <atomic>
#include <chrono>
#include <fstream>
#include <functional>
#include <numeric>
#include <nlohmann/json.hpp>
#include <set>
#include <thread>

#include "smipred/hpo/gp.hpp"
#include "smipred/metrics.hpp"
#include "smipred/model.hpp"

namespace smipred {

struct SearchSpace {
  struct Dim {
    std::string name;
    int lo, hi, step;

    std::size_t count() const {
      return static_cast<std::size_t>((hi - lo) / step + 1);
    }
  };

  ArchClass arch = ArchClass::CnnGru;
  std::vector<Dim> dims;

  static SearchSpace for_arch(ArchClass arch) {
    SearchSpace s;
    s.arch = arch;
    s.dims.push_back({"em_size", 10, 60, 10});
    if (arch_has_conv(arch)) s.dims.push_back({"conv_filters", 4, 192, 4});
    s.dims.push_back({"rnn1_units", 8, 384, 8});
    s.dims.push_back({"rnn2_units", 8, 384, 8});
    return s;
  }

  std::size_t grid_size() const {
    std::size_t total = 1;
    for (const auto& d : dims) total *= d.count();
    return total;
  }

  std::vector<int> values_from_flat(std::size_t flat) const {
    std::vector<int> vals(dims.size());
    for (std::size_t d = dims.size(); d-- > 0;) {
      const std::size_t c = dims[d].count();
      vals[d] = dims[d].lo + static_cast<int>(flat % c) * dims[d].step;
      flat /= c;
    }
    return vals;
  }

  std::size_t flat_from_values(const std::vector<int>& vals) const {
    std::size_t flat = 0;
    for (std::size_t d = 0; d < dims.size(); ++d) {
      const auto idx =
          static_cast<std::size_t>((vals[d] - dims[d].lo) / dims[d].step);
      flat = flat * dims[d].count() + idx;
    }
    return flat;
  }

  HyperParams params_from_values(const std::vector<int>& vals) const {
    HyperParams hp;
    for (std::size_t d = 0; d < dims.size(); ++d) {
      if (dims[d].name == "em_size") hp.em_size = vals[d];
      else if (dims[d].name == "conv_filters") hp.conv_filters = vals[d];
      else if (dims[d].name == "rnn1_units") hp.rnn1_units = vals[d];
      else hp.rnn2_units = vals[d];
    }
    return hp;
  }

  std::vector<int> values_from_params(const HyperParams& hp) const {
    std::vector<int> vals;
    for (const auto& d : dims) {
      if (d.name == "em_size") vals.push_back(hp.em_size);
      else if (d.name == "conv_filters") vals.push_back(hp.conv_filters);
      else if (d.name == "rnn1_units") vals.push_back(hp.rnn1_units);
      else vals.push_back(hp.rnn2_units);
    }
    return vals;
  }

  HyperParams params_from_flat(std::size_t flat) const {
    return params_from_values(values_from_flat(flat));
  }

  std::size_t flat_from_params(const HyperParams& hp) const {
    return flat_from_values(values_from_params(hp));
  }

  bool contains(const HyperParams& hp) const {
    const auto vals = values_from_params(hp);
    for (std::size_t d = 0; d < dims.size(); ++d) {
      if (vals[d] < dims[d].lo || vals[d] > dims[d].hi) return false;
      if ((vals[d] - dims[d].lo) % dims[d].step != 0) return false;
    }
    return true;
  }

  // map to the unit cube for the surrogate
  void normalize(const HyperParams& hp, double* out) const {
    const auto vals = values_from_params(hp);
    for (std::size_t d = 0; d < dims.size(); ++d)
      out[d] = static_cast<double>(vals[d] - dims[d].lo) /
               static_cast<double>(dims[d].hi - dims[d].lo);
  }
};

// The six manual seed designs: embedding 40, conv 16 where applicable, both
// recurrent layers at 8/16/32/64/128/256 units.
inline std::vector<HyperParams> seed_trials(ArchClass arch) {
  std::vector<HyperParams> seeds;
  for (int u : {8, 16, 32, 64, 128, 256}) {
    HyperParams hp;
    hp.em_size = 40;
    hp.conv_filters = arch_has_conv(arch) ? 16 : 0;
    hp.rnn1_units = u;
    hp.rnn2_units = u;
    seeds.push_back(hp);
  }
  return seeds;
}

// Surrogate training point; deliberately lacks any test-metric field.
struct SurrogatePoint {
  std::vector<double> x;
  double objective;  // minimized
};

struct Trial {
  HyperParams params;
  std::string status = "ok";  // ok | failed
  double val_metric = 0.0;    // natural orientation (auc up, rmse down)
  double objective = 0.0;     // minimized form (rmse, or -auc)
  double test_metric = 0.0;
  double wall_seconds = 0.0;
};

struct SuggestConfig {
  std::size_t full_grid_limit = 1'000'000;
  std::size_t sample_count = 10'000;
  int threads = 2;
};

// Picks the untried grid point with maximal expected improvement under a GP
// fit to the history. With fewer than two points, falls back to a random
// untried point. Throws when the grid is exhausted.
inline HyperParams suggest(const std::vector<SurrogatePoint>& history,
                           const std::set<std::size_t>& tried,
                           const SearchSpace& space, Rng& rng,
                           const SuggestConfig& cfg = {}) {
  const std::size_t total = space.grid_size();
  if (tried.size() >= total) raise("search grid exhausted (", total, " points)");

  if (history.size() < 2) {
    std::size_t flat;
    do {
      flat = rng.uniform_int(total);
    } while (tried.count(flat));
    return space.params_from_flat(flat);
  }

  GaussianProcess gp;
  {
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    for (const auto& pt : history) {
      xs.push_back(pt.x);
      ys.push_back(pt.objective);
    }
    gp.fit(xs, ys);
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& pt : history) best = std::min(best, pt.objective);

  // candidate set: the whole grid when it is small enough, otherwise a
  // random sample plus the incumbent's axis neighbors
  std::vector<std::size_t> candidates;
  if (total <= cfg.full_grid_limit) {
    candidates.resize(total);
    std::iota(candidates.begin(), candidates.end(), std::size_t{0});
  } else {
    std::set<std::size_t> chosen;
    while (chosen.size() < cfg.sample_count)
      chosen.insert(rng.uniform_int(total));
    std::size_t best_flat = 0;
    double best_y = std::numeric_limits<double>::infinity();
    for (const auto& pt : history) {
      if (pt.objective < best_y) {
        best_y = pt.objective;
        // recover flat index from normalized x
        std::vector<int> vals(space.dims.size());
        for (std::size_t d = 0; d < space.dims.size(); ++d) {
          const auto& dim = space.dims[d];
          vals[d] = dim.lo + static_cast<int>(std::lround(
                                 pt.x[d] * (dim.hi - dim.lo) /
                                 static_cast<double>(dim.step))) *
                                 dim.step;
        }
        best_flat = space.flat_from_values(vals);
      }
    }
    const auto inc_vals = space.values_from_flat(best_flat);
    for (std::size_t d = 0; d < space.dims.size(); ++d) {
      for (int dir : {-1, 1}) {
        auto v = inc_vals;
        v[d] += dir * space.dims[d].step;
        if (v[d] >= space.dims[d].lo && v[d] <= space.dims[d].hi)
          chosen.insert(space.flat_from_values(v));
      }
    }
    candidates.assign(chosen.begin(), chosen.end());
  }

  // chunked EI scan; each worker keeps its local argmax, merged by
  // (ei, -flat) so the result does not depend on thread interleaving
  const std::size_t d = space.dims.size();
  const std::size_t chunk = 8192;
  struct BestHit {
    double ei = -1.0;
    std::size_t flat = 0;
    bool valid = false;
  };
  const int n_threads = std::max(1, cfg.threads);
  std::vector<BestHit> hits(static_cast<std::size_t>(n_threads));
  std::atomic<std::size_t> cursor{0};

  auto worker = [&](int wid) {
    std::vector<double> xs(chunk * d), mean, var;
    BestHit local;
    for (;;) {
      const std::size_t start = cursor.fetch_add(chunk);
      if (start >= candidates.size()) break;
      const std::size_t stop = std::min(candidates.size(), start + chunk);
      std::size_t fill = 0;
      for (std::size_t i = start; i < stop; ++i) {
        const HyperParams hp = space.params_from_flat(candidates[i]);
        space.normalize(hp, xs.data() + fill * d);
        ++fill;
      }
      gp.posterior(xs.data(), fill, mean, var);
      for (std::size_t i = 0; i < fill; ++i) {
        const std::size_t flat = candidates[start + i];
        if (tried.count(flat)) continue;
        const double ei = expected_improvement(mean[i], var[i], best);
        if (!local.valid || ei > local.ei ||
            (ei == local.ei && flat < local.flat)) {
          local = {ei, flat, true};
        }
      }
    }
    hits[static_cast<std::size_t>(wid)] = local;
  };
  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }
  BestHit merged;
  for (const auto& h : hits) {
    if (!h.valid) continue;
    if (!merged.valid || h.ei > merged.ei ||
        (h.ei == merged.ei && h.flat < merged.flat))
      merged = h;
  }
  if (!merged.valid) raise("search grid exhausted (", total, " points)");
  return space.params_from_flat(merged.flat);
}

// ---------------------------------------------------------------------------
// Search driver with an append-only JSON-lines ledger
// ---------------------------------------------------------------------------

// objective(params) returns (natural validation metric, test metric);
// the driver handles sign flips for maximized metrics.
struct ObjectiveResult {
  double val_metric = 0.0;
  double test_metric = 0.0;
  bool ok = true;
  std::string error;
};
using ObjectiveFn = std::function<ObjectiveResult(const HyperParams&)>;

struct SearchConfig {
  int n_trials = 60;
  bool maximize = false;  // true for AUC
  std::uint64_t seed = 0;
  std::string ledger_path;  // empty: in-memory only
  SuggestConfig suggest;
};

struct SearchReport {
  std::vector<Trial> trials;
  HyperParams best_params;
  double best_val_metric = 0.0;
  double best_test_metric = 0.0;
  bool has_best = false;

  double val_test_correlation() const {
    std::vector<double> v, t;
    for (const auto& tr : trials) {
      if (tr.status != "ok") continue;
      v.push_back(tr.val_metric);
      t.push_back(tr.test_metric);
    }
    if (v.size() < 3)
      raise("val/test correlation needs at least 3 completed trials");
    return pearson(v, t);
  }
};

inline nlohmann::json trial_to_json(const Trial& t, std::size_t index) {
  return {{"trial", index},
          {"params",
           {{"em_size", t.params.em_size},
            {"conv_filters", t.params.conv_filters},
            {"rnn1_units", t.params.rnn1_units},
            {"rnn2_units", t.params.rnn2_units}}},
          {"status", t.status},
          {"val_metric", t.val_metric},
          {"objective", t.objective},
          {"test_metric", t.test_metric},
          {"wall_seconds", t.wall_seconds}};
}

inline Trial trial_from_json(const nlohmann::json& j) {
  Trial t;
  t.params.em_size = j["params"]["em_size"].get<int>();
  t.params.conv_filters = j["params"]["conv_filters"].get<int>();
  t.params.rnn1_units = j["params"]["rnn1_units"].get<int>();
  t.params.rnn2_units = j["params"]["rnn2_units"].get<int>();
  t.status = j["status"].get<std::string>();
  t.val_metric = j["val_metric"].get<double>();
  t.objective = j["objective"].get<double>();
  t.test_metric = j["test_metric"].get<double>();
  t.wall_seconds = j["wall_seconds"].get<double>();
  return t;
}

inline std::vector<Trial> read_ledger(const std::string& path) {
  std::vector<Trial> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(trial_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

// Runs seeds-then-suggestions up to cfg.n_trials, resuming from the ledger
// when one exists. Failed trials stay in the ledger and count against the
// budget but never reach the surrogate.
inline SearchReport run_search(ArchClass arch, const ObjectiveFn& objective,
                               const SearchConfig& cfg) {
  const SearchSpace space = SearchSpace::for_arch(arch);
  SearchReport report;
  if (!cfg.ledger_path.empty())
    report.trials = read_ledger(cfg.ledger_path);

  std::set<std::size_t> tried;
  std::vector<SurrogatePoint> history;
  auto absorb = [&](const Trial& t) {
    tried.insert(space.flat_from_params(t.params));
    if (t.status == "ok") {
      SurrogatePoint pt;
      pt.x.resize(space.dims.size());
      space.normalize(t.params, pt.x.data());
      pt.objective = t.objective;
      history.push_back(std::move(pt));
    }
  };
  for (const auto& t : report.trials) absorb(t);

  std::ofstream ledger;
  if (!cfg.ledger_path.empty()) {
    ledger.open(cfg.ledger_path, std::ios::app);
    if (!ledger) raise<IoError>("cannot open ledger ", cfg.ledger_path);
  }

  Rng rng(derive_seed(cfg.seed, "search"));
  const auto seeds = seed_trials(arch);
  std::size_t seed_cursor = 0;

  while (report.trials.size() < static_cast<std::size_t>(cfg.n_trials)) {
    HyperParams next;
    bool found = false;
    while (seed_cursor < seeds.size()) {
      const auto& candidate = seeds[seed_cursor++];
      if (!tried.count(space.flat_from_params(candidate))) {
        next = candidate;
        found = true;
        break;
      }
    }
    if (!found) next = suggest(history, tried, space, rng, cfg.suggest);

    const auto t0 = std::chrono::steady_clock::now();
    ObjectiveResult res = objective(next);
    const auto t1 = std::chrono::steady_clock::now();

    Trial trial;
    trial.params = next;
    trial.wall_seconds =
        std::chrono::duration<double>(t1 - t0).count();
    if (res.ok) {
      trial.val_metric = res.val_metric;
      trial.objective = cfg.maximize ? -res.val_metric : res.val_metric;
      trial.test_metric = res.test_metric;
    } else {
      trial.status = "failed";
    }
    absorb(trial);
    report.trials.push_back(trial);
    if (ledger) {
      ledger << trial_to_json(trial, report.trials.size() - 1).dump() << "\n";
      ledger.flush();
    }
  }

  for (const auto& t : report.trials) {
    if (t.status != "ok") continue;
    if (!report.has_best || t.objective < (cfg.maximize ? -report.best_val_metric
                                                        : report.best_val_metric)) {
      report.best_params = t.params;
      report.best_val_metric = t.val_metric;
      report.best_test_metric = t.test_metric;
      report.has_best = true;
    }
  }
  return report;
}

// Baseline for paired comparisons: uniform sampling without replacement.
inline SearchReport random_search(ArchClass arch, const ObjectiveFn& objective,
                                  int n_trials, std::uint64_t seed,
                                  bool maximize) {
  const SearchSpace space = SearchSpace::for_arch(arch);
  Rng rng(derive_seed(seed, "random-search"));
  std::set<std::size_t> tried;
  SearchReport report;
  while (report.trials.size() < static_cast<std::size_t>(n_trials)) {
    std::size_t flat;
    do {
      flat = rng.uniform_int(space.grid_size());
    } while (tried.count(flat));
    tried.insert(flat);
    Trial trial;
    trial.params = space.params_from_flat(flat);
    ObjectiveResult res = objective(trial.params);
    if (res.ok) {
      trial.val_metric = res.val_metric;
      trial.objective = maximize ? -res.val_metric : res.val_metric;
      trial.test_metric = res.test_metric;
    } else {
      trial.status = "failed";
    }
    report.trials.push_back(trial);
    if (trial.status == "ok" &&
        (!report.has_best ||
         trial.objective < (maximize ? -report.best_val_metric
                                     : report.best_val_metric))) {
      report.best_params = trial.params;
      report.best_val_metric = trial.val_metric;
      report.best_test_metric = trial.test_metric;
      report.has_best = true;
    }
  }
  return report;
}

}  // namespace smipred
