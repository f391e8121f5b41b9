//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
#include <catch2/catch_amalgamated.hpp>
#include <cstdio>

#include "smipred/explain.hpp"
#include "smipred/trainer.hpp"
#include "test_util.hpp"

using namespace smipred;

namespace {

Vocabulary micro_vocab() { return Vocabulary::build({"CNO"}); }

Model<double> micro_base(const Vocabulary& v, std::uint64_t seed) {
  return build_model<double>(ArchClass::Gru, {10, 0, 8, 8},
                             {TaskType::Regression, 1}, v, seed);
}

ExplainerConfig tiny_explainer_cfg() {
  ExplainerConfig cfg;
  cfg.channels = 8;
  cfg.n_layers = 4;
  return cfg;
}

}  // namespace

TEST_CASE("identity mask reproduces the base prediction") {
  auto v = micro_vocab();
  auto base = micro_base(v, 7);
  std::vector<EncodedSmiles> encs{encode("CNO", v), encode("OCCN", v)};
  auto batch = make_batch(encs, v);

  Graph<double> g;
  NodeId emb = model_embed(g, base, batch.indices, true);
  NodeId direct = model_tail(g, base, emb, true);
  Tensor<double> ones({2, kEncodedLength}, 1.0);
  NodeId masked = apply_mask(g, emb, g.input(ones));
  NodeId via_mask = model_tail(g, base, masked, true);
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(g.value(via_mask)[i] ==
          Catch::Approx(g.value(direct)[i]).margin(1e-6));

  // all-zeros mask silences the embedding entirely
  Tensor<double> zeros({2, kEncodedLength});
  NodeId dark = apply_mask(g, emb, g.input(zeros));
  for (std::size_t i = 0; i < g.value(dark).size(); ++i)
    CHECK(g.value(dark)[i] == 0.0);

  // negative mask values violate the contract
  Tensor<double> neg({2, kEncodedLength}, 1.0);
  neg[5] = -0.25;
  CHECK_THROWS_AS(apply_mask(g, emb, g.input(neg)), Error);
}

TEST_CASE("explainer output is nonnegative with one value per position") {
  auto v = micro_vocab();
  auto base = micro_base(v, 9);
  auto net = build_explainer<double>(10, tiny_explainer_cfg(), 3);

  std::vector<EncodedSmiles> encs{encode("CNO", v), encode("NNOC", v),
                                  encode("OCN", v)};
  auto batch = make_batch(encs, v);
  Graph<double> g;
  NodeId emb = model_embed(g, base, batch.indices, true);
  NodeId mask = explainer_forward(g, net, emb, /*training=*/true);
  REQUIRE(g.value(mask).shape() == Shape{3, kEncodedLength});
  for (std::size_t i = 0; i < g.value(mask).size(); ++i)
    CHECK(g.value(mask)[i] >= 0.0);
}

TEST_CASE("compute_mask is deterministic and normalized") {
  auto v = micro_vocab();
  auto base = micro_base(v, 11);
  auto net = build_explainer<double>(10, tiny_explainer_cfg(), 5);

  auto m1 = compute_mask(net, base, "OCCN");
  auto m2 = compute_mask(net, base, "OCCN");
  CHECK(m1.raw == m2.raw);

  double sum = 0.0, entropy = 0.0;
  for (std::size_t c = m1.content_begin; c < m1.content_end; ++c) {
    sum += m1.normalized[c];
    if (m1.normalized[c] > 0)
      entropy -= m1.normalized[c] * std::log(m1.normalized[c]);
  }
  CHECK(sum == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(m1.content_length() == 4);
  CHECK(entropy <= std::log(4.0) + 1e-12);

  // pad positions carry no normalized mass
  for (std::size_t c = 0; c < m1.content_begin; ++c)
    CHECK(m1.normalized[c] == 0.0);
  for (std::size_t c = m1.content_end; c < kEncodedLength; ++c)
    CHECK(m1.normalized[c] == 0.0);
}

TEST_CASE("top_k selection rules") {
  MaskReport rep;
  rep.smiles = "CNOC";
  rep.content_begin = kFlankPad;
  rep.content_end = kFlankPad + 4;
  rep.raw.assign(kEncodedLength, 0.0);
  rep.normalized.assign(kEncodedLength, 0.0);

  // uniform: leftmost tie-break picks positions 0,1,2
  for (std::size_t c = 0; c < 4; ++c)
    rep.normalized[kFlankPad + c] = 0.25;
  auto top = top_k_chars(rep, 3);
  CHECK(top[0].position == 0);
  CHECK(top[1].position == 1);
  CHECK(top[2].position == 2);
  CHECK(top[0].character == 'C');

  // concentrated mass: k=1 finds the peak
  for (std::size_t c = 0; c < 4; ++c) rep.normalized[kFlankPad + c] = 0.0;
  rep.normalized[kFlankPad + 2] = 1.0;
  auto only = top_k_chars(rep, 1);
  CHECK(only[0].position == 2);
  CHECK(only[0].character == 'O');

  CHECK_THROWS_AS(top_k_chars(rep, 5), Error);
}

TEST_CASE("mask loss decomposes into its three logged terms") {
  auto v = micro_vocab();
  auto base = micro_base(v, 13);
  auto net = build_explainer<double>(10, tiny_explainer_cfg(), 17);

  std::vector<EncodedSmiles> encs{encode("CNO", v), encode("OOCN", v)};
  auto batch = make_batch(encs, v);
  Tensor<double> targets({2});
  targets[0] = 0.4;
  targets[1] = -1.2;
  Tensor<double> content({2, kEncodedLength});
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = encs[r].content_begin; c < encs[r].content_end; ++c)
      content[r * kEncodedLength + c] = 1.0;

  ExplainerConfig cfg = tiny_explainer_cfg();
  Graph<double> g;
  NodeId emb = model_embed(g, base, batch.indices, true);
  NodeId mask = explainer_forward(g, net, emb, true);
  NodeId out = model_tail(g, base, apply_mask(g, emb, mask), true);
  NodeId total = mask_loss(g, out, targets, mask, content, cfg);

  // recompute the three terms directly from node values
  const auto& ov = g.value(out);
  const auto& mv = g.value(mask);
  double expect = 0.0;
  for (std::size_t r = 0; r < 2; ++r) {
    const double fid = (ov[r] - targets[r]) * (ov[r] - targets[r]);
    double ss = 0.0, sum = 0.0;
    for (std::size_t c = 0; c < kEncodedLength; ++c) {
      const double m = mv[r * kEncodedLength + c] * content[r * kEncodedLength + c];
      ss += m * m;
      sum += m;
    }
    double h = 0.0;
    for (std::size_t c = 0; c < kEncodedLength; ++c) {
      if (content[r * kEncodedLength + c] == 0.0) continue;
      const double p = mv[r * kEncodedLength + c] / sum;
      if (p > 1e-12) h -= p * std::log(p);
    }
    expect += fid + cfg.l2_weight * std::sqrt(ss) + cfg.entropy_weight * h;
  }
  expect /= 2.0;
  CHECK(g.value(total)[0] == Catch::Approx(expect).margin(1e-10));
}

TEST_CASE("mask loss gradient w.r.t. explainer parameters") {
  auto v = micro_vocab();
  auto base = micro_base(v, 19);
  ExplainerConfig cfg = tiny_explainer_cfg();
  cfg.channels = 6;
  cfg.n_layers = 2;
  auto net = build_explainer<double>(10, cfg, 23);

  // short sequences keep the finite-difference pass quick
  IndexMatrix idx(2, 12);
  Rng rng(29);
  for (auto& ix : idx.v) ix = static_cast<std::int32_t>(rng.uniform_int(4));
  Tensor<double> targets({2});
  targets[0] = 0.3;
  targets[1] = -0.7;
  Tensor<double> content({2, 12}, 1.0);

  auto params = net.trainable();
  auto build = [&](Graph<double>& g) {
    NodeId emb = model_embed(g, base, idx, true);
    NodeId mask = explainer_forward(g, net, emb, true);
    NodeId out = model_tail(g, base, apply_mask(g, emb, mask), true);
    return mask_loss(g, out, targets, mask, content, cfg);
  };
  zero_grads(params);
  {
    Graph<double> g;
    g.backward(build(g));
  }
  LossFn<double> loss = [&]() {
    Graph<double> g;
    return g.value(build(g))[0];
  };
  CHECK(grad_check(params, loss) < 1e-3);
}

TEST_CASE("training freezes the base and follows the lr schedule") {
  // planted feature: position 4 carries O/F/S with labels +3/-3/0 and every
  // other position is drawn from the label-neutral pair {C, N}
  Dataset ds;
  ds.name = "planted";
  ds.task = {TaskType::Regression, 1};
  ds.label_names = {"y"};
  Rng rng(derive_seed(0, "data"));
  const char neutral[2] = {'C', 'N'};
  std::set<std::string> seen;
  while (ds.records.size() < 96) {
    std::string s;
    for (int i = 0; i < 9; ++i) s += neutral[rng.uniform_int(2)];
    const double u = rng.uniform();
    double y;
    char c;
    if (u < 1.0 / 3) {
      c = 'O';
      y = 3.0;
    } else if (u < 2.0 / 3) {
      c = 'F';
      y = -3.0;
    } else {
      c = 'S';
      y = 0.0;
    }
    s[4] = c;
    if (!seen.insert(s).second) continue;
    DataRecord r;
    r.smiles = s;
    r.labels = {y};
    r.present = {1};
    ds.records.push_back(std::move(r));
  }
  auto vocab = Vocabulary::build(ds.all_smiles());

  auto base = build_model<double>(ArchClass::Gru, {10, 0, 16, 16}, ds.task,
                                  vocab, derive_seed(0, "base"));
  ResampledFold fold;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    fold.train.push_back(i);
    fold.validation.push_back(i);
  }
  TrainConfig tc;
  tc.learning_rate = 5e-3;
  tc.batch_size = 8;
  tc.max_epochs = 80;
  tc.patience = 79;
  tc.seed = derive_seed(0, "tc");
  auto bh = train(base, fold, ds, tc);
  REQUIRE(bh.best_val_loss < 0.1);  // the base must carry the planted signal

  ExplainerConfig cfg;
  cfg.channels = 16;
  cfg.n_layers = 4;
  cfg.max_epochs = 300;
  cfg.plateau_patience = 15;
  cfg.plateau_rel_delta = 1e-5;
  cfg.seed = derive_seed(0, "ecfg");
  auto net = build_explainer<double>(10, cfg, derive_seed(0, "enet"));

  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const std::uint64_t base_before = weights_hash(base);
  auto hist = train_explainer(net, base, ds, rows, cfg);
  CHECK(weights_hash(base) == base_before);

  // learning-rate trace is non-increasing and drawn from the schedule
  for (std::size_t i = 1; i < hist.lr_trace.size(); ++i)
    CHECK(hist.lr_trace[i] < hist.lr_trace[i - 1]);
  for (double lr : hist.lr_trace) {
    bool member = false;
    for (double ref : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6})
      member |= lr == Catch::Approx(ref).epsilon(1e-12);
    CHECK(member);
  }

  // the mask localizes the planted position for most active molecules
  std::size_t hits = 0, active = 0;
  for (const auto& rec : ds.records) {
    if (rec.labels[0] == 0.0) continue;
    ++active;
    auto mask = compute_mask(net, base, rec.smiles);
    if (top_k_chars(mask, 1)[0].position == 4) ++hits;
  }
  CHECK(hits * 2 > active);
}
