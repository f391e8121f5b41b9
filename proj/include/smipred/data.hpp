//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset ingestion and splitting: CSV loading with validity filtering, the
// fixed test partition plus 5-fold cross-validation plan, stratification and
// minority oversampling for classification tasks. Exact-duplicate SMILES are
// collapsed at load so no molecule can appear on both sides of a split.
#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "smipred/model.hpp"
#include "smipred/rng.hpp"
#include "smipred/smiles.hpp"

namespace smipred {

struct DataRecord {
  std::string smiles;
  std::vector<double> labels;
  std::vector<std::uint8_t> present;  // 0 = missing label
};

struct LoadStats {
  std::size_t rows_seen = 0;
  std::size_t dropped_invalid = 0;
  std::size_t dropped_long = 0;
  std::size_t dropped_missing_target = 0;
  std::size_t collapsed_duplicates = 0;
};

struct Dataset {
  std::string name;
  TaskSpec task;
  std::vector<std::string> label_names;
  std::vector<DataRecord> records;
  LoadStats stats;

  std::size_t size() const { return records.size(); }

  std::vector<std::string> all_smiles() const {
    std::vector<std::string> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.smiles);
    return out;
  }
};

namespace detail {

// RFC4180-ish CSV: quoted fields, doubled quotes, CR/LF line ends.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get();
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"': quoted = true; any = true; break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r': break;
      case '\n':
        if (any || !field.empty() || !row.empty()) {
          row.push_back(std::move(field));
          field.clear();
          rows.push_back(std::move(row));
          row.clear();
          any = false;
        }
        break;
      default: field += c; any = true; break;
    }
  }
  if (any || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline bool is_blank(const std::string& s) {
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  return true;
}

}  // namespace detail

struct LoadOptions {
  std::vector<std::string> label_columns;  // empty: every non-smiles column
  std::string name;
};

// Loads a labeled SMILES CSV. Requires a header with a "smiles" column
// (case-insensitive); label columns must parse as numbers, blanks mark
// missing labels. Rows failing validate_smiles or longer than 250
// characters are dropped and counted, as are exact-duplicate SMILES.
inline Dataset load_csv(const std::string& path, const TaskSpec& task,
                        const LoadOptions& opts = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise<IoError>("cannot open dataset file ", path);
  auto rows = detail::parse_csv(in);
  if (rows.size() < 2) raise<IoError>(path, ": no data rows");

  const auto& header = rows[0];
  std::size_t smiles_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (detail::lower(header[i]) == "smiles") smiles_col = i;
  if (smiles_col == header.size())
    raise<IoError>(path, ": no column named 'smiles'");

  std::vector<std::size_t> label_cols;
  if (opts.label_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (i != smiles_col) label_cols.push_back(i);
  } else {
    for (const auto& want : opts.label_columns) {
      bool found = false;
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == want) {
          label_cols.push_back(i);
          found = true;
          break;
        }
      }
      if (!found) raise<IoError>(path, ": no column named '", want, "'");
    }
  }
  if (label_cols.size() != static_cast<std::size_t>(task.n_outputs))
    raise("dataset has ", label_cols.size(),
          " label columns but the task declares ", task.n_outputs);

  Dataset ds;
  ds.name = opts.name.empty() ? path : opts.name;
  ds.task = task;
  for (auto c : label_cols) ds.label_names.push_back(header[c]);

  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    ++ds.stats.rows_seen;
    if (row.size() != header.size())
      raise<IoError>(path, ": row ", r + 1, " has ", row.size(),
                     " fields, header has ", header.size());
    const std::string& smi = row[smiles_col];
    if (smi.size() > kMaxSmilesLength) {
      ++ds.stats.dropped_long;
      continue;
    }
    if (!validate_smiles(smi).valid) {
      ++ds.stats.dropped_invalid;
      continue;
    }
    if (!seen.insert(smi).second) {
      ++ds.stats.collapsed_duplicates;
      continue;
    }
    DataRecord rec;
    rec.smiles = smi;
    bool missing_any = false;
    for (auto c : label_cols) {
      const std::string& cell = row[c];
      if (detail::is_blank(cell)) {
        rec.labels.push_back(0.0);
        rec.present.push_back(0);
        missing_any = true;
        continue;
      }
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0')
        raise<IoError>(path, ": row ", r + 1, ": cannot parse '", cell,
                       "' in column ", header[c]);
      rec.labels.push_back(v);
      rec.present.push_back(1);
    }
    if (task.type == TaskType::Regression && missing_any) {
      ++ds.stats.dropped_missing_target;
      continue;
    }
    ds.records.push_back(std::move(rec));
  }
  if (ds.records.empty()) raise<IoError>(path, ": every row was dropped");
  return ds;
}

struct SplitPlan {
  double test_fraction = 0.1;  // 1/6 for Tox21 and HIV, 1/10 otherwise
  int n_folds = 5;
  std::uint64_t seed = 0;
  // classification only: task whose labels drive stratification and
  // oversampling; -1 picks the most imbalanced task
  int primary_task = -1;
};

struct ResampledFold {
  std::vector<std::size_t> train;       // multiset, includes duplicates
  std::vector<std::size_t> validation;
  // train position -> original dataset index, for appended duplicates only
  std::vector<std::pair<std::size_t, std::size_t>> duplicate_provenance;
  double class_ratio_after = 1.0;  // majority/minority on the primary task
};

struct SplitResult {
  std::vector<std::size_t> test;
  std::vector<ResampledFold> folds;
  int primary_task = 0;
};

// Picks the classification task with the largest majority/minority ratio.
inline int auto_primary_task(const Dataset& ds) {
  int best = -1;
  double best_ratio = -1.0;
  for (int t = 0; t < ds.task.n_outputs; ++t) {
    std::size_t pos = 0, neg = 0;
    for (const auto& r : ds.records) {
      if (!r.present[static_cast<std::size_t>(t)]) continue;
      (r.labels[static_cast<std::size_t>(t)] > 0.5 ? pos : neg)++;
    }
    if (pos == 0 || neg == 0) continue;
    const double ratio =
        static_cast<double>(std::max(pos, neg)) / static_cast<double>(std::min(pos, neg));
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = t;
    }
  }
  if (best < 0) raise("stratification: no task has both classes");
  return best;
}

// Duplicates each minority-class training record round(majority/minority)-1
// extra times. Validation and test indices are never touched.
inline void oversample_minority(ResampledFold& fold, const Dataset& ds,
                                int task_index) {
  const auto ti = static_cast<std::size_t>(task_index);
  std::vector<std::size_t> pos, neg;
  for (std::size_t idx : fold.train) {
    const auto& r = ds.records[idx];
    if (!r.present[ti]) continue;
    (r.labels[ti] > 0.5 ? pos : neg).push_back(idx);
  }
  if (pos.empty() || neg.empty())
    raise("oversampling: a class has zero members on task ", task_index);
  const bool pos_minority = pos.size() < neg.size();
  auto& minority = pos_minority ? pos : neg;
  auto& majority = pos_minority ? neg : pos;
  const long ratio = std::lround(static_cast<double>(majority.size()) /
                                 static_cast<double>(minority.size()));
  const long extra = std::max(0l, ratio - 1);
  for (long k = 0; k < extra; ++k) {
    for (std::size_t idx : minority) {
      fold.duplicate_provenance.emplace_back(fold.train.size(), idx);
      fold.train.push_back(idx);
    }
  }
  const double min_after =
      static_cast<double>(minority.size()) * static_cast<double>(1 + extra);
  fold.class_ratio_after = static_cast<double>(majority.size()) / min_after;
}

// Test partition plus n_folds cross-validation folds. Classification splits
// are stratified on the primary task before oversampling; the same seed
// always reproduces identical index lists.
inline SplitResult make_splits(const Dataset& ds, const SplitPlan& plan) {
  const std::size_t n = ds.size();
  if (plan.n_folds < 2) raise("split: need at least two folds");
  if (n < static_cast<std::size_t>(10 * plan.n_folds))
    raise("split: dataset of ", n, " is too small for ", plan.n_folds,
          " folds");
  if (plan.test_fraction <= 0.0 || plan.test_fraction >= 1.0)
    raise("split: test fraction must lie in (0, 1)");

  const bool stratified = ds.task.type == TaskType::Classification;
  SplitResult out;
  out.primary_task = stratified
                         ? (plan.primary_task >= 0 ? plan.primary_task
                                                   : auto_primary_task(ds))
                         : 0;

  // strata: one for regression; {negative, positive, missing} on the
  // primary task for classification
  std::vector<std::vector<std::size_t>> strata;
  if (stratified) {
    const auto ti = static_cast<std::size_t>(out.primary_task);
    strata.assign(3, {});
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = ds.records[i];
      if (!r.present[ti])
        strata[2].push_back(i);
      else if (r.labels[ti] > 0.5) {
        strata[1].push_back(i);
        ++pos;
      } else {
        strata[0].push_back(i);
        ++neg;
      }
    }
    if (pos == 0 || neg == 0)
      raise("split: primary task ", out.primary_task,
            " has a single class; stratification is degenerate");
  } else {
    strata.assign(1, {});
    for (std::size_t i = 0; i < n; ++i) strata[0].push_back(i);
  }

  Rng rng(derive_seed(plan.seed, "split"));
  for (auto& s : strata) rng.shuffle(s.begin(), s.end());

  // test size: round(n * fraction) overall, spread over strata by largest
  // remainder
  const auto test_total =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * plan.test_fraction));
  std::vector<std::size_t> take(strata.size(), 0);
  {
    std::vector<double> exact(strata.size());
    std::size_t floored = 0;
    for (std::size_t s = 0; s < strata.size(); ++s) {
      exact[s] = static_cast<double>(strata[s].size()) * plan.test_fraction;
      take[s] = static_cast<std::size_t>(exact[s]);
      floored += take[s];
    }
    std::vector<std::size_t> order(strata.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return (exact[a] - std::floor(exact[a])) > (exact[b] - std::floor(exact[b]));
    });
    for (std::size_t k = 0; floored < test_total && k < order.size(); ++k) {
      if (take[order[k]] < strata[order[k]].size()) {
        ++take[order[k]];
        ++floored;
      }
    }
  }

  const auto folds = static_cast<std::size_t>(plan.n_folds);
  std::vector<std::vector<std::size_t>> fold_members(folds);
  std::size_t rr = 0;  // round-robin cursor carried across strata
  for (std::size_t s = 0; s < strata.size(); ++s) {
    for (std::size_t i = 0; i < strata[s].size(); ++i) {
      if (i < take[s]) {
        out.test.push_back(strata[s][i]);
      } else {
        fold_members[rr % folds].push_back(strata[s][i]);
        ++rr;
      }
    }
  }

  out.folds.resize(folds);
  for (std::size_t k = 0; k < folds; ++k) {
    ResampledFold& fold = out.folds[k];
    fold.validation = fold_members[k];
    for (std::size_t j = 0; j < folds; ++j) {
      if (j == k) continue;
      fold.train.insert(fold.train.end(), fold_members[j].begin(),
                        fold_members[j].end());
    }
    if (stratified) oversample_minority(fold, ds, out.primary_task);
  }
  return out;
}

inline nlohmann::json split_manifest(const SplitResult& split,
                                     const SplitPlan& plan) {
  nlohmann::json j;
  j["seed"] = plan.seed;
  j["test_fraction"] = plan.test_fraction;
  j["n_folds"] = plan.n_folds;
  j["primary_task"] = split.primary_task;
  j["test"] = split.test;
  j["folds"] = nlohmann::json::array();
  for (const auto& f : split.folds) {
    nlohmann::json fj;
    fj["validation"] = f.validation;
    fj["train"] = f.train;
    nlohmann::json dup = nlohmann::json::array();
    for (const auto& [pos, orig] : f.duplicate_provenance)
      dup.push_back({pos, orig});
    fj["duplicates"] = dup;
    fj["class_ratio_after"] = f.class_ratio_after;
    j["folds"].push_back(std::move(fj));
  }
  return j;
}

// ---------------------------------------------------------------------------
// Batch assembly for training
// ---------------------------------------------------------------------------

inline EncodedBatch encode_dataset(const Dataset& ds, const Vocabulary& vocab,
                                   const std::vector<std::size_t>& indices) {
  std::vector<EncodedSmiles> rows;
  rows.reserve(indices.size());
  for (std::size_t i : indices) rows.push_back(encode(ds.records[i].smiles, vocab));
  return make_batch(rows, vocab);
}

template <typename T>
void gather_labels(const Dataset& ds, const std::vector<std::size_t>& indices,
                   Tensor<T>& labels, Tensor<T>& mask) {
  const auto k = static_cast<std::size_t>(ds.task.n_outputs);
  labels = Tensor<T>({indices.size(), k});
  mask = Tensor<T>({indices.size(), k});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& rec = ds.records[indices[r]];
    for (std::size_t c = 0; c < k; ++c) {
      labels[r * k + c] = static_cast<T>(rec.labels[c]);
      mask[r * k + c] = static_cast<T>(rec.present[c]);
    }
  }
}

}  // namespace smipred
