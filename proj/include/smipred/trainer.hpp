//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
// Supervised training protocol: RMSprop, fixed batch size, per-epoch seeded
// shuffling, early stopping on the validation loss with the last best
// weights restored. Cross-validation trains one model per fold and reports
// validation and test metrics.
#pragma once

#include <atomic>
#include <iomanip>
#include <mutex>
#include <thread>

#include "smipred/data.hpp"
#include "smipred/metrics.hpp"
#include "smipred/model.hpp"
#include "smipred/nn/losses.hpp"
#include "smipred/nn/optim.hpp"

namespace smipred {

struct TrainConfig {
  double learning_rate = 1e-3;
  double rho = 0.9;
  double epsilon = 1e-8;
  int batch_size = 32;
  int max_epochs = 250;
  int patience = 25;
  std::uint64_t seed = 0;

  void validate() const {
    if (patience >= max_epochs)
      raise("train config: patience (", patience,
            ") must be below max_epochs (", max_epochs, ")");
    if (batch_size < 2) raise("train config: batch_size must be at least 2");
  }
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;

  void write_csv(std::ostream& os) const {
    os << "epoch,train_loss,val_loss,val_metric\n";
    for (const auto& e : epochs) {
      os << e.epoch << ',' << std::setprecision(17) << e.train_loss << ','
         << e.val_loss << ',' << e.val_metric << '\n';
    }
  }
};

namespace detail {

template <typename T>
struct PreparedData {
  std::vector<EncodedSmiles> encodings;  // one per referenced dataset row
  std::map<std::size_t, std::size_t> row_to_slot;

  void prepare(const Dataset& ds, const Vocabulary& vocab,
               const std::vector<std::size_t>& rows) {
    for (std::size_t r : rows) {
      if (row_to_slot.count(r)) continue;
      row_to_slot[r] = encodings.size();
      encodings.push_back(encode(ds.records[r].smiles, vocab));
    }
  }

  IndexMatrix batch(const std::vector<std::size_t>& rows) const {
    IndexMatrix m(rows.size(), kEncodedLength);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& enc = encodings[row_to_slot.at(rows[i])];
      std::copy(enc.indices.begin(), enc.indices.end(),
                m.v.begin() + static_cast<std::ptrdiff_t>(i * kEncodedLength));
    }
    return m;
  }
};

// Mean loss over a list of rows without touching gradients.
template <typename T>
double dataset_loss(Model<T>& model, const Dataset& ds,
                    const PreparedData<T>& prep,
                    const std::vector<std::size_t>& rows, std::size_t chunk) {
  double total = 0.0;
  double weight = 0.0;
  for (std::size_t start = 0; start < rows.size(); start += chunk) {
    const std::size_t stop = std::min(rows.size(), start + chunk);
    std::vector<std::size_t> part(rows.begin() + static_cast<std::ptrdiff_t>(start),
                                  rows.begin() + static_cast<std::ptrdiff_t>(stop));
    Tensor<T> labels, mask;
    gather_labels(ds, part, labels, mask);
    Graph<T> g;
    NodeId y = model_forward(g, model, prep.batch(part), /*freeze=*/true);
    NodeId loss = ds.task.type == TaskType::Classification
                      ? bce_masked(g, y, labels, mask)
                      : mae_loss(g, y, labels);
    // weight by the unmasked count so chunking cannot change the result
    double w;
    if (ds.task.type == TaskType::Classification) {
      w = 0.0;
      for (std::size_t i = 0; i < mask.size(); ++i)
        w += static_cast<double>(mask[i]);
    } else {
      w = static_cast<double>(labels.size());
    }
    total += static_cast<double>(g.value(loss)[0]) * w;
    weight += w;
  }
  return total / weight;
}

template <typename T>
double dataset_metric(Model<T>& model, const Dataset& ds,
                      const PreparedData<T>& prep,
                      const std::vector<std::size_t>& rows) {
  IndexMatrix idx = prep.batch(rows);
  EncodedBatch eb;
  eb.indices = std::move(idx);
  eb.vocab_hash = model.vocab.hash();
  Tensor<T> scores = predict(model, eb);
  const auto k = static_cast<std::size_t>(ds.task.n_outputs);
  if (ds.task.type == TaskType::Regression) {
    std::vector<double> p, t;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < k; ++c) {
        p.push_back(static_cast<double>(scores[r * k + c]));
        t.push_back(ds.records[rows[r]].labels[c]);
      }
    }
    return evaluate_rmse(p, t);
  }
  std::vector<std::vector<double>> per_task_scores(k);
  std::vector<std::vector<int>> per_task_labels(k);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& rec = ds.records[rows[r]];
    for (std::size_t c = 0; c < k; ++c) {
      per_task_scores[c].push_back(static_cast<double>(scores[r * k + c]));
      per_task_labels[c].push_back(rec.present[c] ? (rec.labels[c] > 0.5)
                                                  : -1);
    }
  }
  return evaluate_auc_multitask(per_task_scores, per_task_labels);
}

}  // namespace detail

// Trains on the fold's (possibly oversampled) indices, evaluating the
// validation loss after every epoch. Stops once `patience` epochs pass
// without a strict improvement and restores the best weights.
template <typename T>
TrainHistory train(Model<T>& model, const ResampledFold& fold,
                   const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  detail::PreparedData<T> prep;
  prep.prepare(ds, model.vocab, fold.train);
  prep.prepare(ds, model.vocab, fold.validation);

  auto params = model.trainable();
  RmsProp<T> opt(static_cast<T>(cfg.learning_rate), static_cast<T>(cfg.rho),
                 static_cast<T>(cfg.epsilon));

  TrainHistory hist;
  hist.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<Tensor<T>> best_weights = snapshot_weights(model);

  std::vector<std::size_t> order = fold.train;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t eval_chunk = 256;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle",
                                static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    double loss_weight = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t stop = std::min(order.size(), start + bs);
      std::vector<std::size_t> rows(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() + static_cast<std::ptrdiff_t>(stop));
      Tensor<T> labels, mask;
      gather_labels(ds, rows, labels, mask);

      zero_grads(params);
      Graph<T> g;
      NodeId y = model_forward(g, model, prep.batch(rows), /*freeze=*/false);
      NodeId loss = ds.task.type == TaskType::Classification
                        ? bce_masked(g, y, labels, mask)
                        : mae_loss(g, y, labels);
      const double lv = static_cast<double>(g.value(loss)[0]);
      if (!std::isfinite(lv))
        raise("training diverged: non-finite loss at epoch ", epoch,
              ", batch ", start / bs);
      g.backward(loss);
      opt.step(params);
      loss_sum += lv * static_cast<double>(rows.size());
      loss_weight += static_cast<double>(rows.size());
    }

    const double val_loss =
        detail::dataset_loss(model, ds, prep, fold.validation, eval_chunk);
    const double val_metric =
        detail::dataset_metric(model, ds, prep, fold.validation);
    hist.epochs.push_back(EpochStats{epoch, loss_sum / loss_weight, val_loss,
                                     val_metric});

    if (val_loss < hist.best_val_loss) {
      hist.best_val_loss = val_loss;
      hist.best_epoch = epoch;
      best_weights = snapshot_weights(model);
    } else if (epoch - hist.best_epoch >= cfg.patience) {
      hist.stopped_early = true;
      break;
    }
  }

  restore_weights(model, best_weights);
  return hist;
}

struct FoldReport {
  int fold = 0;
  double val_loss = 0.0;
  double val_metric = 0.0;
  double test_metric = 0.0;
  int best_epoch = 0;
  bool stopped_early = false;
  TrainHistory history;
};

struct CvReport {
  std::string metric_name;  // "auc" (macro average) or "rmse"
  std::vector<FoldReport> folds;
  double mean_val_metric = 0.0;
  double std_val_metric = 0.0;
  double mean_test_metric = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["metric"] = metric_name;
    j["mean_val_metric"] = mean_val_metric;
    j["std_val_metric"] = std_val_metric;
    j["mean_test_metric"] = mean_test_metric;
    j["folds"] = nlohmann::json::array();
    for (const auto& f : folds) {
      j["folds"].push_back({{"fold", f.fold},
                            {"val_loss", f.val_loss},
                            {"val_metric", f.val_metric},
                            {"test_metric", f.test_metric},
                            {"best_epoch", f.best_epoch},
                            {"stopped_early", f.stopped_early}});
    }
    return j;
  }
};

struct RunCvOptions {
  int parallel_folds = 1;
  // when set, fold models are saved as <dir>/fold<k>.model
  std::string checkpoint_dir;
  // desk-scale configurations may sit off the search grid
  bool enforce_grid = true;
};

template <typename T>
CvReport run_cv(const Dataset& ds, const SplitResult& split, ArchClass arch,
                const HyperParams& hp, const TrainConfig& cfg,
                const Vocabulary& vocab, const RunCvOptions& opts = {}) {
  CvReport report;
  report.metric_name =
      ds.task.type == TaskType::Classification ? "auc" : "rmse";
  report.folds.resize(split.folds.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure = nullptr;
  std::mutex failure_mu;

  auto worker = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= split.folds.size()) return;
      try {
        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = derive_seed(cfg.seed, "fold", k);
        Model<T> model = build_model<T>(arch, hp, ds.task, vocab,
                                        derive_seed(cfg.seed, "init", k),
                                        opts.enforce_grid);
        TrainHistory hist = train(model, split.folds[k], ds, fold_cfg);

        detail::PreparedData<T> prep;
        prep.prepare(ds, vocab, split.folds[k].validation);
        prep.prepare(ds, vocab, split.test);

        FoldReport& fr = report.folds[k];
        fr.fold = static_cast<int>(k);
        fr.val_loss = hist.best_val_loss;
        fr.val_metric =
            detail::dataset_metric(model, ds, prep, split.folds[k].validation);
        fr.test_metric = detail::dataset_metric(model, ds, prep, split.test);
        fr.best_epoch = hist.best_epoch;
        fr.stopped_early = hist.stopped_early;
        fr.history = std::move(hist);
        if (!opts.checkpoint_dir.empty())
          save_model(model, opts.checkpoint_dir + "/fold" + std::to_string(k) +
                                ".model");
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const int n_threads = std::max(1, std::min<int>(opts.parallel_folds,
                                                  static_cast<int>(split.folds.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  double sum = 0.0, sum_sq = 0.0, test_sum = 0.0;
  for (const auto& f : report.folds) {
    sum += f.val_metric;
    sum_sq += f.val_metric * f.val_metric;
    test_sum += f.test_metric;
  }
  const double n = static_cast<double>(report.folds.size());
  report.mean_val_metric = sum / n;
  report.std_val_metric =
      std::sqrt(std::max(0.0, sum_sq / n - (sum / n) * (sum / n)));
  report.mean_test_metric = test_sum / n;
  return report;
}

}  // namespace smipred
