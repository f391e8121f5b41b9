//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics. AUC is the exact Mann-Whitney statistic computed with
// average ranks, so ties contribute one half.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "smipred/common.hpp"

namespace smipred {

// P(score+ > score-) + 0.5 P(tie). Labels are 0/1; throws when only one
// class is present.
inline double evaluate_auc(std::span<const double> scores,
                           std::span<const int> labels) {
  if (scores.size() != labels.size())
    raise<ShapeError>("auc: scores/labels size mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) raise("auc: labels must be 0/1, got ", l);
    n_pos += static_cast<std::size_t>(l);
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    raise("auc: needs at least one positive and one negative");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // average ranks over tie groups, 1-based
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) +
                                   static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double u = rank_sum_pos -
                   0.5 * static_cast<double>(n_pos) *
                       static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Macro average over tasks that have both classes; tasks with a single class
// are skipped. labels < 0 mark missing entries. Throws when every task is
// degenerate.
inline double evaluate_auc_multitask(
    const std::vector<std::vector<double>>& scores_per_task,
    const std::vector<std::vector<int>>& labels_per_task) {
  if (scores_per_task.size() != labels_per_task.size())
    raise<ShapeError>("auc: per-task list size mismatch");
  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t t = 0; t < scores_per_task.size(); ++t) {
    std::vector<double> s;
    std::vector<int> l;
    for (std::size_t i = 0; i < scores_per_task[t].size(); ++i) {
      if (labels_per_task[t][i] < 0) continue;
      s.push_back(scores_per_task[t][i]);
      l.push_back(labels_per_task[t][i]);
    }
    const bool has_pos = std::count(l.begin(), l.end(), 1) > 0;
    const bool has_neg = std::count(l.begin(), l.end(), 0) > 0;
    if (!has_pos || !has_neg) continue;
    acc += evaluate_auc(s, l);
    ++used;
  }
  if (used == 0) raise("auc: no task with both classes present");
  return acc / static_cast<double>(used);
}

inline double evaluate_rmse(std::span<const double> predictions,
                            std::span<const double> targets) {
  if (predictions.empty()) raise("rmse: empty input");
  if (predictions.size() != targets.size())
    raise<ShapeError>("rmse: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - targets[i];
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(predictions.size()));
}

inline double evaluate_mae(std::span<const double> predictions,
                           std::span<const double> targets) {
  if (predictions.empty()) raise("mae: empty input");
  if (predictions.size() != targets.size())
    raise<ShapeError>("mae: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    acc += std::abs(predictions[i] - targets[i]);
  return acc / static_cast<double>(predictions.size());
}

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) raise<ShapeError>("pearson: size mismatch");
  const std::size_t n = xs.size();
  if (n < 2) raise("pearson: needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    raise("pearson: zero variance in one of the series");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace smipred
