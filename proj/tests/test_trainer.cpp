//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
#include <catch2/catch_amalgamated.hpp>

#include "smipred/trainer.hpp"

using namespace smipred;

namespace {

// Tiny regression corpus whose target is a linear function of character
// counts, which the recurrent nets can fit quickly.
Dataset linear_synthetic(std::size_t n, std::uint64_t seed) {
  Dataset ds;
  ds.name = "linear-synthetic";
  ds.task = {TaskType::Regression, 1};
  ds.label_names = {"y"};
  Rng rng(seed);
  const char alphabet[3] = {'C', 'N', 'O'};
  std::set<std::string> seen;
  while (ds.records.size() < n) {
    const std::size_t len = 3 + rng.uniform_int(10);
    std::string s;
    for (std::size_t i = 0; i < len; ++i)
      s += alphabet[rng.uniform_int(3)];
    if (!seen.insert(s).second) continue;
    double y = 0.0;
    for (char c : s) {
      if (c == 'C') y += 0.30;
      if (c == 'N') y -= 0.20;
      if (c == 'O') y += 0.05;
    }
    DataRecord r;
    r.smiles = s;
    r.labels = {y};
    r.present = {1};
    ds.records.push_back(std::move(r));
  }
  return ds;
}

ResampledFold all_in_fold(std::size_t n) {
  ResampledFold f;
  for (std::size_t i = 0; i < n; ++i) {
    f.train.push_back(i);
    f.validation.push_back(i);
  }
  return f;
}

}  // namespace

TEST_CASE("train config invariants") {
  TrainConfig bad;
  bad.patience = 250;
  bad.max_epochs = 250;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.patience = 25;
  bad.batch_size = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("zero learning rate gives a constant validation loss and stops at patience + 1") {
  auto ds = linear_synthetic(24, 3);
  auto vocab = Vocabulary::build(ds.all_smiles());
  auto fold = all_in_fold(ds.size());

  auto model = build_model<double>(ArchClass::Gru, {10, 0, 8, 8}, ds.task,
                                   vocab, 5);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;  // weights never move
  cfg.max_epochs = 250;
  cfg.patience = 25;
  cfg.seed = 1;
  auto hist = train(model, fold, ds, cfg);

  CHECK(hist.best_epoch == 1);
  CHECK(hist.stopped_early);
  CHECK(hist.epochs.size() == 26);  // epoch 1 best, then 25 without progress
  for (std::size_t i = 1; i < hist.epochs.size(); ++i)
    CHECK(hist.epochs[i].val_loss == Catch::Approx(hist.epochs[0].val_loss));
}

TEST_CASE("micro model fits a 32-point synthetic linear regression") {
  auto ds = linear_synthetic(32, 7);
  auto vocab = Vocabulary::build(ds.all_smiles());
  auto fold = all_in_fold(ds.size());

  auto model = build_model<double>(ArchClass::Gru, {10, 0, 16, 16}, ds.task,
                                   vocab, 11);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 8;  // more steps per epoch on this tiny corpus
  cfg.max_epochs = 50;
  cfg.patience = 49;
  cfg.seed = 2;
  auto hist = train(model, fold, ds, cfg);

  REQUIRE(!hist.epochs.empty());
  const double first = hist.epochs.front().train_loss;
  const double last = hist.epochs.back().train_loss;
  CHECK(last < 0.2 * first);

  // early-stopping bookkeeping invariants
  const auto& back = hist.epochs.back();
  if (hist.stopped_early)
    CHECK(back.epoch - hist.best_epoch <= cfg.patience + 1);
  double best_seen = std::numeric_limits<double>::infinity();
  int best_at = 0;
  for (const auto& e : hist.epochs) {
    if (e.val_loss < best_seen) {
      best_seen = e.val_loss;
      best_at = e.epoch;
    }
  }
  CHECK(best_at == hist.best_epoch);
  CHECK(best_seen == Catch::Approx(hist.best_val_loss));
}

TEST_CASE("returned model carries the best-epoch weights") {
  auto ds = linear_synthetic(24, 13);
  auto vocab = Vocabulary::build(ds.all_smiles());
  auto fold = all_in_fold(ds.size());
  auto model = build_model<double>(ArchClass::Gru, {10, 0, 8, 8}, ds.task,
                                   vocab, 17);
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.max_epochs = 12;
  cfg.patience = 11;
  cfg.seed = 3;
  auto hist = train(model, fold, ds, cfg);

  // recompute the validation loss of the returned weights
  detail::PreparedData<double> prep;
  prep.prepare(ds, vocab, fold.validation);
  const double recomputed =
      detail::dataset_loss(model, ds, prep, fold.validation, 256);
  CHECK(recomputed == Catch::Approx(hist.best_val_loss).epsilon(1e-12));
}

TEST_CASE("run_cv yields five fold reports and is deterministic") {
  auto ds = linear_synthetic(60, 19);
  auto vocab = Vocabulary::build(ds.all_smiles());
  SplitPlan plan{0.1, 5, 23};
  auto split = make_splits(ds, plan);

  TrainConfig cfg;
  cfg.learning_rate = 2e-3;
  cfg.max_epochs = 3;
  cfg.patience = 2;
  cfg.seed = 29;

  auto r1 = run_cv<double>(ds, split, ArchClass::Gru, {10, 0, 8, 8}, cfg,
                           vocab, {});
  CHECK(r1.folds.size() == 5);
  CHECK(r1.metric_name == "rmse");
  for (const auto& f : r1.folds) CHECK(f.history.epochs.size() >= 1);

  // identical seeds and config give identical reports at 64-bit precision,
  // with or without fold-level parallelism
  auto r2 = run_cv<double>(ds, split, ArchClass::Gru, {10, 0, 8, 8}, cfg,
                           vocab, {});
  RunCvOptions two_threads;
  two_threads.parallel_folds = 2;
  auto r3 = run_cv<double>(ds, split, ArchClass::Gru, {10, 0, 8, 8}, cfg,
                           vocab, two_threads);
  CHECK(r1.to_json().dump() == r2.to_json().dump());
  CHECK(r1.to_json().dump() == r3.to_json().dump());
}
