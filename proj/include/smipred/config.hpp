//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: one JSON document holding everything a command needs.
// Values are validated against the module contracts before any work starts
// and the resolved form is written into the output directory, so a run can
// be reproduced from its artifacts alone.
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "smipred/data.hpp"
#include "smipred/explain.hpp"
#include "smipred/trainer.hpp"

namespace smipred {

struct RunConfig {
  // data
  std::string dataset_path;
  std::vector<std::string> label_columns;
  TaskSpec task{TaskType::Regression, 1};

  // model
  ArchClass arch = ArchClass::CnnGru;
  HyperParams hp{32, 32, 32, 32};

  // training protocol
  TrainConfig train;

  // splitting
  SplitPlan split;

  // search
  int hpo_budget = 60;

  // explainer
  ExplainerConfig explainer;
  double soluble_cutoff = -1.0;
  double insoluble_cutoff = -5.0;

  // run plumbing
  std::string out_dir;
  std::uint64_t master_seed = 0;
  int precision = 32;  // 32 or 64
  int parallel_folds = 2;
  bool allow_off_grid = false;

  void validate() const {
    if (dataset_path.empty()) raise("config: dataset path is required");
    if (task.n_outputs < 1) raise("config: n_outputs must be positive");
    if (precision != 32 && precision != 64)
      raise("config: precision must be 32 or 64");
    if (hpo_budget < 1) raise("config: hpo budget must be positive");
    train.validate();
    if (split.n_folds < 2) raise("config: need at least 2 folds");
    if (split.test_fraction <= 0 || split.test_fraction >= 1)
      raise("config: test fraction must lie in (0, 1)");
    if (!allow_off_grid) validate_hyperparams(arch, hp);
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["dataset"] = c.dataset_path;
  j["labels"] = c.label_columns;
  j["task"] = {{"type", to_string(c.task.type)},
               {"n_outputs", c.task.n_outputs}};
  j["arch"] = to_string(c.arch);
  j["hyperparams"] = {{"em_size", c.hp.em_size},
                      {"conv_filters", c.hp.conv_filters},
                      {"rnn1_units", c.hp.rnn1_units},
                      {"rnn2_units", c.hp.rnn2_units}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"rho", c.train.rho},
                {"epsilon", c.train.epsilon},
                {"batch_size", c.train.batch_size},
                {"max_epochs", c.train.max_epochs},
                {"patience", c.train.patience}};
  j["split"] = {{"test_fraction", c.split.test_fraction},
                {"n_folds", c.split.n_folds},
                {"primary_task", c.split.primary_task}};
  j["hpo_budget"] = c.hpo_budget;
  j["explainer"] = {{"channels", c.explainer.channels},
                    {"n_layers", c.explainer.n_layers},
                    {"l2_weight", c.explainer.l2_weight},
                    {"entropy_weight", c.explainer.entropy_weight},
                    {"lr_start", c.explainer.lr_start},
                    {"lr_floor", c.explainer.lr_floor},
                    {"plateau_patience", c.explainer.plateau_patience},
                    {"plateau_rel_delta", c.explainer.plateau_rel_delta},
                    {"batch_size", c.explainer.batch_size},
                    {"max_epochs", c.explainer.max_epochs},
                    {"target_is_label", c.explainer.target_is_label}};
  j["cutoffs"] = {{"soluble", c.soluble_cutoff},
                  {"insoluble", c.insoluble_cutoff}};
  j["out_dir"] = c.out_dir;
  j["master_seed"] = c.master_seed;
  j["precision"] = c.precision;
  j["parallel_folds"] = c.parallel_folds;
  j["allow_off_grid"] = c.allow_off_grid;
  return j;
}

inline void from_json_into(const nlohmann::json& j, RunConfig& c) {
  if (j.contains("dataset")) c.dataset_path = j["dataset"].get<std::string>();
  if (j.contains("labels"))
    c.label_columns = j["labels"].get<std::vector<std::string>>();
  if (j.contains("task")) {
    c.task.type = task_type_from_string(j["task"]["type"].get<std::string>());
    c.task.n_outputs = j["task"]["n_outputs"].get<int>();
  }
  if (j.contains("arch")) c.arch = arch_from_string(j["arch"].get<std::string>());
  if (j.contains("hyperparams")) {
    const auto& h = j["hyperparams"];
    c.hp = HyperParams{h["em_size"].get<int>(), h["conv_filters"].get<int>(),
                       h["rnn1_units"].get<int>(), h["rnn2_units"].get<int>()};
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    if (t.contains("learning_rate"))
      c.train.learning_rate = t["learning_rate"].get<double>();
    if (t.contains("rho")) c.train.rho = t["rho"].get<double>();
    if (t.contains("epsilon")) c.train.epsilon = t["epsilon"].get<double>();
    if (t.contains("batch_size")) c.train.batch_size = t["batch_size"].get<int>();
    if (t.contains("max_epochs")) c.train.max_epochs = t["max_epochs"].get<int>();
    if (t.contains("patience")) c.train.patience = t["patience"].get<int>();
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    if (s.contains("test_fraction"))
      c.split.test_fraction = s["test_fraction"].get<double>();
    if (s.contains("n_folds")) c.split.n_folds = s["n_folds"].get<int>();
    if (s.contains("primary_task"))
      c.split.primary_task = s["primary_task"].get<int>();
  }
  if (j.contains("hpo_budget")) c.hpo_budget = j["hpo_budget"].get<int>();
  if (j.contains("explainer")) {
    const auto& e = j["explainer"];
    if (e.contains("channels")) c.explainer.channels = e["channels"].get<int>();
    if (e.contains("n_layers")) c.explainer.n_layers = e["n_layers"].get<int>();
    if (e.contains("l2_weight"))
      c.explainer.l2_weight = e["l2_weight"].get<double>();
    if (e.contains("entropy_weight"))
      c.explainer.entropy_weight = e["entropy_weight"].get<double>();
    if (e.contains("lr_start")) c.explainer.lr_start = e["lr_start"].get<double>();
    if (e.contains("lr_floor")) c.explainer.lr_floor = e["lr_floor"].get<double>();
    if (e.contains("plateau_patience"))
      c.explainer.plateau_patience = e["plateau_patience"].get<int>();
    if (e.contains("plateau_rel_delta"))
      c.explainer.plateau_rel_delta = e["plateau_rel_delta"].get<double>();
    if (e.contains("batch_size"))
      c.explainer.batch_size = e["batch_size"].get<int>();
    if (e.contains("max_epochs"))
      c.explainer.max_epochs = e["max_epochs"].get<int>();
    if (e.contains("target_is_label"))
      c.explainer.target_is_label = e["target_is_label"].get<bool>();
  }
  if (j.contains("cutoffs")) {
    c.soluble_cutoff = j["cutoffs"]["soluble"].get<double>();
    c.insoluble_cutoff = j["cutoffs"]["insoluble"].get<double>();
  }
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("master_seed"))
    c.master_seed = j["master_seed"].get<std::uint64_t>();
  if (j.contains("precision")) c.precision = j["precision"].get<int>();
  if (j.contains("parallel_folds"))
    c.parallel_folds = j["parallel_folds"].get<int>();
  if (j.contains("allow_off_grid"))
    c.allow_off_grid = j["allow_off_grid"].get<bool>();
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise<IoError>("cannot read config file ", path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    raise<IoError>("config ", path, " is not valid JSON: ", e.what());
  }
  RunConfig c;
  from_json_into(j, c);
  return c;
}

// Default output root: SMIPRED_OUT_ROOT from the environment, else "runs".
inline std::string default_out_root() {
  if (const char* env = std::getenv("SMIPRED_OUT_ROOT")) return env;
  return "runs";
}

inline void write_resolved_config(const RunConfig& c) {
  std::filesystem::create_directories(c.out_dir);
  std::ofstream out(c.out_dir + "/resolved_config.json");
  if (!out) raise<IoError>("cannot write resolved config into ", c.out_dir);
  out << to_json(c).dump(2) << "\n";
}

}  // namespace smipred
