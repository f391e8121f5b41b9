//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point. Subcommands: encode, train, eval, hpo, explain.
// Machine-readable reports (JSON/CSV) land in --out-dir; a short human
// summary goes to stdout. Exit codes: 0 success, 1 runtime failure,
// 2 usage error.
#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "smipred/config.hpp"
#include "smipred/hpo/search.hpp"

namespace fs = std::filesystem;
using namespace smipred;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int precision = 0;  // 0: take from config / default 32
};

void attach_common(CLI::App* cmd, CommonArgs& common) {
  cmd->add_option("--config", common.config_path,
                  "JSON run configuration; flags override its fields");
  cmd->add_option("--out-dir", common.out_dir, "Output directory");
  cmd->add_option("--seed", common.seed, "Master seed")
      ->each([&common](const std::string&) { common.seed_set = true; });
  cmd->add_option("--precision", common.precision,
                  "Floating-point width for compute")
      ->check(CLI::IsMember({32, 64}));
}

RunConfig resolve_config(const CommonArgs& common, const std::string& verb) {
  RunConfig cfg;
  if (!common.config_path.empty()) cfg = load_config(common.config_path);
  if (common.seed_set) cfg.master_seed = common.seed;
  if (common.precision != 0) cfg.precision = common.precision;
  if (!common.out_dir.empty())
    cfg.out_dir = common.out_dir;
  else if (cfg.out_dir.empty())
    cfg.out_dir = default_out_root() + "/" + verb;
  return cfg;
}

Dataset load_dataset(const RunConfig& cfg) {
  LoadOptions opts;
  opts.label_columns = cfg.label_columns;
  Dataset ds = load_csv(cfg.dataset_path, cfg.task, opts);
  std::cout << "loaded " << ds.size() << " records from " << cfg.dataset_path
            << " (dropped: " << ds.stats.dropped_invalid << " invalid, "
            << ds.stats.dropped_long << " overlong, "
            << ds.stats.collapsed_duplicates << " duplicates)\n";
  return ds;
}

// ---------------------------------------------------------------- encode

int cmd_encode(const RunConfig& cfg) {
  write_resolved_config(cfg);
  Dataset ds = load_dataset(cfg);
  auto vocab = Vocabulary::build(ds.all_smiles());
  vocab.save(cfg.out_dir + "/vocabulary.txt");

  std::vector<std::size_t> length_histogram(26, 0);  // 10-char bins
  for (const auto& r : ds.records)
    length_histogram[std::min<std::size_t>(r.smiles.size() / 10, 25)]++;

  nlohmann::json stats;
  stats["accepted"] = ds.size();
  stats["rows_seen"] = ds.stats.rows_seen;
  stats["dropped_invalid"] = ds.stats.dropped_invalid;
  stats["dropped_long"] = ds.stats.dropped_long;
  stats["dropped_missing_target"] = ds.stats.dropped_missing_target;
  stats["collapsed_duplicates"] = ds.stats.collapsed_duplicates;
  stats["vocabulary_size"] = vocab.size();
  stats["vocabulary_hash"] = vocab.hash();
  stats["length_histogram_10char_bins"] = length_histogram;
  std::ofstream(cfg.out_dir + "/encode_stats.json") << stats.dump(2) << "\n";

  std::cout << "vocabulary: " << vocab.size() << " entries (hash "
            << vocab.hash() << ") -> " << cfg.out_dir << "/vocabulary.txt\n";
  return 0;
}

// ----------------------------------------------------------------- train

template <typename T>
int run_train(const RunConfig& cfg) {
  Dataset ds = load_dataset(cfg);
  auto vocab = Vocabulary::build(ds.all_smiles());
  vocab.save(cfg.out_dir + "/vocabulary.txt");

  SplitPlan plan = cfg.split;
  plan.seed = derive_seed(cfg.master_seed, "split");
  auto split = make_splits(ds, plan);
  std::ofstream(cfg.out_dir + "/split_manifest.json")
      << split_manifest(split, plan).dump(2) << "\n";

  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.master_seed, "train");
  RunCvOptions opts;
  opts.parallel_folds = cfg.parallel_folds;
  opts.checkpoint_dir = cfg.out_dir;
  opts.enforce_grid = !cfg.allow_off_grid;
  CvReport report = run_cv<T>(ds, split, cfg.arch, cfg.hp, tc, vocab, opts);

  std::ofstream(cfg.out_dir + "/cv_report.json") << report.to_json().dump(2)
                                                 << "\n";
  for (const auto& f : report.folds) {
    std::ofstream hist(cfg.out_dir + "/fold" + std::to_string(f.fold) +
                       "_history.csv");
    f.history.write_csv(hist);
  }
  std::cout << "cv " << report.metric_name << ": mean validation "
            << report.mean_val_metric << " (std " << report.std_val_metric
            << "), mean test " << report.mean_test_metric << "\n";
  return 0;
}

// ------------------------------------------------------------------ eval

template <typename T>
int run_eval(const RunConfig& cfg, const std::string& model_path) {
  Model<T> model = load_model<T>(model_path);
  RunConfig data_cfg = cfg;
  data_cfg.task = model.task;
  Dataset ds = load_dataset(data_cfg);

  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  detail::PreparedData<T> prep;
  prep.prepare(ds, model.vocab, rows);
  const double metric = detail::dataset_metric(model, ds, prep, rows);

  EncodedBatch eb;
  eb.indices = prep.batch(rows);
  eb.vocab_hash = model.vocab.hash();
  Tensor<T> preds = predict(model, eb);
  {
    std::ofstream out(cfg.out_dir + "/predictions.csv");
    out << "smiles";
    for (const auto& name : ds.label_names) out << ",pred_" << name;
    out << "\n";
    const auto k = static_cast<std::size_t>(model.task.n_outputs);
    for (std::size_t r = 0; r < ds.size(); ++r) {
      out << ds.records[r].smiles;
      for (std::size_t c = 0; c < k; ++c)
        out << ',' << std::setprecision(10)
            << static_cast<double>(preds[r * k + c]);
      out << "\n";
    }
  }
  nlohmann::json j;
  j["model"] = model_path;
  j["dataset"] = cfg.dataset_path;
  j["metric"] = model.task.type == TaskType::Classification ? "auc" : "rmse";
  j["value"] = metric;
  std::ofstream(cfg.out_dir + "/eval.json") << j.dump(2) << "\n";
  std::cout << (model.task.type == TaskType::Classification ? "auc " : "rmse ")
            << metric << " over " << ds.size() << " records\n";
  return 0;
}

// ------------------------------------------------------------------- hpo

template <typename T>
int run_hpo(const RunConfig& cfg) {
  Dataset ds = load_dataset(cfg);
  auto vocab = Vocabulary::build(ds.all_smiles());
  vocab.save(cfg.out_dir + "/vocabulary.txt");
  const bool classify = ds.task.type == TaskType::Classification;

  // frozen test partition; train/validation resampled per trial
  SplitPlan base_plan = cfg.split;
  base_plan.seed = derive_seed(cfg.master_seed, "hpo-split");
  auto base_split = make_splits(ds, base_plan);

  std::atomic<int> trial_counter{0};
  ObjectiveFn objective = [&](const HyperParams& hp) -> ObjectiveResult {
    ObjectiveResult res;
    const int trial = trial_counter.fetch_add(1);
    try {
      SplitPlan trial_plan = cfg.split;
      trial_plan.seed = derive_seed(cfg.master_seed, "trial-split",
                                    static_cast<std::uint64_t>(trial));
      auto split = make_splits(ds, trial_plan);
      // budget: one fold per trial; the frozen test set is shared
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(cfg.master_seed, "trial-train",
                            static_cast<std::uint64_t>(trial));
      Model<T> model =
          build_model<T>(cfg.arch, hp, ds.task, vocab,
                         derive_seed(cfg.master_seed, "trial-init",
                                     static_cast<std::uint64_t>(trial)));
      train(model, split.folds[0], ds, tc);
      detail::PreparedData<T> prep;
      prep.prepare(ds, vocab, split.folds[0].validation);
      prep.prepare(ds, vocab, base_split.test);
      res.val_metric =
          detail::dataset_metric(model, ds, prep, split.folds[0].validation);
      res.test_metric =
          detail::dataset_metric(model, ds, prep, base_split.test);
    } catch (const std::exception& e) {
      res.ok = false;
      res.error = e.what();
      std::cerr << "trial failed: " << e.what() << "\n";
    }
    return res;
  };

  SearchConfig sc;
  sc.n_trials = cfg.hpo_budget;
  sc.maximize = classify;
  sc.seed = derive_seed(cfg.master_seed, "search");
  sc.ledger_path = cfg.out_dir + "/trials.jsonl";
  SearchReport report = run_search(cfg.arch, objective, sc);

  nlohmann::json j;
  j["arch"] = to_string(cfg.arch);
  j["n_trials"] = report.trials.size();
  if (report.has_best) {
    j["best"] = {{"em_size", report.best_params.em_size},
                 {"conv_filters", report.best_params.conv_filters},
                 {"rnn1_units", report.best_params.rnn1_units},
                 {"rnn2_units", report.best_params.rnn2_units},
                 {"val_metric", report.best_val_metric},
                 {"test_metric", report.best_test_metric}};
  }
  try {
    j["val_test_correlation"] = report.val_test_correlation();
  } catch (const Error&) {
    j["val_test_correlation"] = nullptr;
  }
  std::ofstream(cfg.out_dir + "/search_report.json") << j.dump(2) << "\n";

  {  // scatter data, one row per completed trial
    std::ofstream out(cfg.out_dir + "/val_test_scatter.csv");
    out << "trial,val_metric,test_metric\n";
    for (std::size_t i = 0; i < report.trials.size(); ++i) {
      const auto& t = report.trials[i];
      if (t.status != "ok") continue;
      out << i << ',' << std::setprecision(12) << t.val_metric << ','
          << t.test_metric << "\n";
    }
  }
  if (report.has_best) {
    std::cout << "best design: em " << report.best_params.em_size << ", conv "
              << report.best_params.conv_filters << ", rnn "
              << report.best_params.rnn1_units << "/"
              << report.best_params.rnn2_units << " (validation "
              << report.best_val_metric << ")\n";
  }
  return 0;
}

// --------------------------------------------------------------- explain

template <typename T>
int run_explain(const RunConfig& cfg, const std::string& base_path,
                bool identity_check, const std::string& load_path,
                const std::string& save_path) {
  if (!fs::exists(base_path))
    raise<IoError>("base checkpoint not found: ", base_path);
  Model<T> base = load_model<T>(base_path);
  RunConfig data_cfg = cfg;
  data_cfg.task = base.task;
  Dataset ds = load_dataset(data_cfg);

  if (identity_check) {
    // all-ones mask must reproduce the unmasked prediction
    std::vector<EncodedSmiles> encs;
    for (std::size_t i = 0; i < std::min<std::size_t>(ds.size(), 64); ++i)
      encs.push_back(encode(ds.records[i].smiles, base.vocab));
    IndexMatrix idx(encs.size(), kEncodedLength);
    for (std::size_t i = 0; i < encs.size(); ++i)
      std::copy(
          encs[i].indices.begin(), encs[i].indices.end(),
          idx.v.begin() + static_cast<std::ptrdiff_t>(i * kEncodedLength));
    Graph<T> g;
    NodeId emb = model_embed(g, base, idx, true);
    NodeId direct = model_tail(g, base, emb, true);
    Tensor<T> ones({encs.size(), kEncodedLength}, T{1});
    NodeId masked =
        model_tail(g, base, apply_mask(g, emb, g.input(ones)), true);
    double worst = 0.0;
    for (std::size_t i = 0; i < encs.size(); ++i)
      worst = std::max(worst, std::abs(static_cast<double>(
                                  g.value(direct)[i] - g.value(masked)[i])));
    std::cout << "identity-mask max deviation: " << worst << "\n";
    if (worst > 1e-6) raise("identity mask deviates by ", worst);
    return 0;
  }

  write_resolved_config(cfg);
  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});

  ExplainerNet<T> net;
  if (!load_path.empty()) {
    net = load_explainer<T>(load_path);
    std::cout << "loaded explainer from " << load_path << "\n";
  } else {
    net = build_explainer<T>(base.hp.em_size, cfg.explainer,
                             derive_seed(cfg.master_seed, "explainer"));
    ExplainerConfig ec = cfg.explainer;
    ec.seed = derive_seed(cfg.master_seed, "explainer-train");
    auto hist = train_explainer(net, base, ds, rows, ec);
    std::cout << "explainer trained for " << hist.epochs.size()
              << " epochs, final loss " << hist.epochs.back().train_loss
              << "\n";
    std::ofstream lr(cfg.out_dir + "/explainer_history.csv");
    lr << "epoch,train_loss,learning_rate\n";
    for (const auto& e : hist.epochs)
      lr << e.epoch << ',' << std::setprecision(17) << e.train_loss << ','
         << e.learning_rate << "\n";
  }
  if (!save_path.empty()) save_explainer(net, save_path);

  auto rep = interpretability_accuracy(net, base, ds, rows, cfg.soluble_cutoff,
                                       cfg.insoluble_cutoff);
  std::vector<std::string> extreme_smiles;
  for (const auto& mol : rep.molecules) extreme_smiles.push_back(mol.smiles);
  auto masks = compute_masks(net, base, extreme_smiles);
  {
    std::ofstream out(cfg.out_dir + "/attribution.jsonl");
    write_attribution_report(rep, masks, out);
  }
  nlohmann::json j;
  j["per_character_accuracy"] = rep.per_character_accuracy;
  j["per_molecule_majority_accuracy"] = rep.per_molecule_majority_accuracy;
  j["n_soluble"] = rep.n_soluble;
  j["n_insoluble"] = rep.n_insoluble;
  j["reference_reported"] = 0.88;
  std::ofstream(cfg.out_dir + "/interpretability.json") << j.dump(2) << "\n";
  std::cout << "top-3 interpretability: per-character "
            << rep.per_character_accuracy << ", per-molecule majority "
            << rep.per_molecule_majority_accuracy << " over "
            << rep.n_soluble + rep.n_insoluble
            << " extremes (reported reference 0.88)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Character-level chemical property prediction"};
  app.require_subcommand(1);

  CommonArgs common;
  RunConfig flag_cfg;  // flag values collected here, merged after parse

  auto* encode_cmd = app.add_subcommand("encode", "Build vocabulary and stats");
  attach_common(encode_cmd, common);
  encode_cmd->add_option("--dataset", flag_cfg.dataset_path, "CSV file");
  encode_cmd->add_option("--labels", flag_cfg.label_columns, "Label columns");
  std::string task_type;
  int n_outputs = 0;
  encode_cmd->add_option("--task-type", task_type, "classification|regression");
  encode_cmd->add_option("--n-outputs", n_outputs, "Number of label columns");

  auto* train_cmd = app.add_subcommand("train", "Cross-validated training");
  attach_common(train_cmd, common);
  train_cmd->add_option("--dataset", flag_cfg.dataset_path, "CSV file");
  train_cmd->add_option("--labels", flag_cfg.label_columns, "Label columns");
  train_cmd->add_option("--task-type", task_type, "classification|regression");
  train_cmd->add_option("--n-outputs", n_outputs, "Number of label columns");
  std::string arch_name;
  train_cmd->add_option("--arch", arch_name, "gru|lstm|cnn-gru|cnn-lstm");
  int em = 0, conv = -1, rnn1 = 0, rnn2 = 0;
  train_cmd->add_option("--em", em, "Embedding width");
  train_cmd->add_option("--conv", conv, "Conv filters (CNN classes)");
  train_cmd->add_option("--rnn1", rnn1, "Layer-1 units per direction");
  train_cmd->add_option("--rnn2", rnn2, "Layer-2 units per direction");
  int max_epochs = 0, patience = 0, batch = 0, folds = 0, parallel = 0;
  double lr = 0, test_fraction = 0;
  train_cmd->add_option("--max-epochs", max_epochs, "Epoch cap");
  train_cmd->add_option("--patience", patience, "Early-stopping patience");
  train_cmd->add_option("--batch-size", batch, "Mini-batch size");
  train_cmd->add_option("--learning-rate", lr, "RMSprop learning rate");
  train_cmd->add_option("--test-fraction", test_fraction, "Held-out fraction");
  train_cmd->add_option("--folds", folds, "Cross-validation folds");
  train_cmd->add_option("--parallel-folds", parallel, "Concurrent folds");
  bool allow_off_grid = false;
  train_cmd->add_flag("--allow-off-grid", allow_off_grid,
                      "Accept hyperparameters outside the search grid");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved model");
  attach_common(eval_cmd, common);
  std::string model_path;
  eval_cmd->add_option("--model", model_path, "Model container")->required();
  eval_cmd->add_option("--dataset", flag_cfg.dataset_path, "CSV file");
  eval_cmd->add_option("--labels", flag_cfg.label_columns, "Label columns");

  auto* hpo_cmd = app.add_subcommand("hpo", "Bayesian architecture search");
  attach_common(hpo_cmd, common);
  hpo_cmd->add_option("--dataset", flag_cfg.dataset_path, "CSV file");
  hpo_cmd->add_option("--labels", flag_cfg.label_columns, "Label columns");
  hpo_cmd->add_option("--task-type", task_type, "classification|regression");
  hpo_cmd->add_option("--n-outputs", n_outputs, "Number of label columns");
  hpo_cmd->add_option("--arch", arch_name, "Architecture class");
  int budget = 0;
  hpo_cmd->add_option("--budget", budget, "Total trials including seeds");
  hpo_cmd->add_option("--max-epochs", max_epochs, "Per-trial epoch cap");
  hpo_cmd->add_option("--patience", patience, "Per-trial patience");
  hpo_cmd->add_option("--test-fraction", test_fraction, "Held-out fraction");

  auto* explain_cmd = app.add_subcommand("explain", "Train/apply the mask");
  attach_common(explain_cmd, common);
  std::string base_path, load_explainer_path, save_explainer_path;
  bool identity_check = false;
  explain_cmd->add_option("--base", base_path, "Base model container")
      ->required();
  explain_cmd->add_option("--dataset", flag_cfg.dataset_path, "CSV file");
  explain_cmd->add_option("--labels", flag_cfg.label_columns, "Label columns");
  explain_cmd->add_flag("--identity-mask-check", identity_check,
                        "Verify the all-ones mask and exit");
  explain_cmd->add_option("--load-explainer", load_explainer_path,
                          "Reuse a trained explainer");
  explain_cmd->add_option("--save-explainer", save_explainer_path,
                          "Persist the trained explainer");
  int exp_channels = 0, exp_epochs = 0;
  explain_cmd->add_option("--channels", exp_channels, "Explainer width");
  explain_cmd->add_option("--explainer-epochs", exp_epochs, "Epoch cap");
  double sol_cut = std::numeric_limits<double>::quiet_NaN();
  double insol_cut = std::numeric_limits<double>::quiet_NaN();
  explain_cmd->add_option("--soluble-cutoff", sol_cut, "Soluble threshold");
  explain_cmd->add_option("--insoluble-cutoff", insol_cut,
                          "Insoluble threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string verb = sub->get_name();
    RunConfig cfg = resolve_config(common, verb);

    // flags win over the config file
    if (!flag_cfg.dataset_path.empty()) cfg.dataset_path = flag_cfg.dataset_path;
    if (!flag_cfg.label_columns.empty())
      cfg.label_columns = flag_cfg.label_columns;
    if (!task_type.empty()) cfg.task.type = task_type_from_string(task_type);
    if (n_outputs > 0)
      cfg.task.n_outputs = n_outputs;
    else if (!cfg.label_columns.empty())
      cfg.task.n_outputs = static_cast<int>(cfg.label_columns.size());
    if (!arch_name.empty()) cfg.arch = arch_from_string(arch_name);
    if (em > 0) cfg.hp.em_size = em;
    if (conv >= 0) cfg.hp.conv_filters = conv;
    if (rnn1 > 0) cfg.hp.rnn1_units = rnn1;
    if (rnn2 > 0) cfg.hp.rnn2_units = rnn2;
    if (!arch_has_conv(cfg.arch)) cfg.hp.conv_filters = 0;
    if (max_epochs > 0) cfg.train.max_epochs = max_epochs;
    if (patience > 0) cfg.train.patience = patience;
    if (batch > 0) cfg.train.batch_size = batch;
    if (lr > 0) cfg.train.learning_rate = lr;
    if (test_fraction > 0) cfg.split.test_fraction = test_fraction;
    if (folds > 0) cfg.split.n_folds = folds;
    if (parallel > 0) cfg.parallel_folds = parallel;
    if (budget > 0) cfg.hpo_budget = budget;
    if (exp_channels > 0) cfg.explainer.channels = exp_channels;
    if (exp_epochs > 0) cfg.explainer.max_epochs = exp_epochs;
    if (!std::isnan(sol_cut)) cfg.soluble_cutoff = sol_cut;
    if (!std::isnan(insol_cut)) cfg.insoluble_cutoff = insol_cut;
    if (allow_off_grid) cfg.allow_off_grid = true;

    fs::create_directories(cfg.out_dir);

    if (verb == "encode") {
      cfg.validate();
      return cmd_encode(cfg);
    }
    if (verb == "train") {
      cfg.validate();
      write_resolved_config(cfg);
      return cfg.precision == 64 ? run_train<double>(cfg)
                                 : run_train<float>(cfg);
    }
    if (verb == "eval") {
      write_resolved_config(cfg);
      return cfg.precision == 64 ? run_eval<double>(cfg, model_path)
                                 : run_eval<float>(cfg, model_path);
    }
    if (verb == "hpo") {
      cfg.validate();
      write_resolved_config(cfg);
      return cfg.precision == 64 ? run_hpo<double>(cfg) : run_hpo<float>(cfg);
    }
    if (verb == "explain") {
      return cfg.precision == 64
                 ? run_explain<double>(cfg, base_path, identity_check,
                                       load_explainer_path,
                                       save_explainer_path)
                 : run_explain<float>(cfg, base_path, identity_check,
                                      load_explainer_path,
                                      save_explainer_path);
    }
    std::cerr << "unknown subcommand\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
