//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
// Explanation-mask machinery: a residual convolutional explainer network
// trained against a frozen base model. The explainer reads the base model's
// embedding output and emits one nonnegative weight per sequence position;
// the weighted embedding is pushed through the frozen base and the mask is
// trained to keep the prediction while concentrating its mass.
#pragma once

#include <algorithm>
#include <fstream>

#include "smipred/data.hpp"
#include "smipred/model.hpp"
#include "smipred/nn/losses.hpp"
#include "smipred/nn/optim.hpp"

namespace smipred {

struct ExplainerConfig {
  int channels = 64;   // constant width of the residual stack
  int n_layers = 20;   // stack depth; an identity skip wraps every 2 layers
  double l2_weight = 1e-6;
  double entropy_weight = 0.05;
  double lr_start = 1e-2;
  double lr_floor = 1e-6;
  double lr_divisor = 10.0;
  double plateau_rel_delta = 1e-4;
  int plateau_patience = 10;
  int batch_size = 32;
  int max_epochs = 400;
  std::uint64_t seed = 0;
  // fidelity target: the dataset label (default), or the base model's own
  // unmasked prediction when false
  bool target_is_label = true;
};

template <typename T>
struct ExplainerNet {
  int channels = 64;
  int n_layers = 20;
  int em_size = 0;
  std::vector<Variable<T>> params;
  BnState<T> head_bn{1};

  Variable<T>& find(std::string_view name) {
    for (auto& p : params)
      if (p.name == name) return p;
    raise("explainer has no parameter '", std::string(name), "'");
  }

  std::vector<Variable<T>*> trainable() {
    std::vector<Variable<T>*> out;
    for (auto& p : params) out.push_back(&p);
    return out;
  }
};

template <typename T>
ExplainerNet<T> build_explainer(int em_size, const ExplainerConfig& cfg,
                                std::uint64_t seed) {
  if (cfg.n_layers % 2 != 0) raise("explainer stack depth must be even");
  ExplainerNet<T> net;
  net.channels = cfg.channels;
  net.n_layers = cfg.n_layers;
  net.em_size = em_size;
  net.head_bn = BnState<T>(1);

  Rng rng(derive_seed(seed, "explainer-init"));
  const auto ch = static_cast<std::size_t>(cfg.channels);
  const auto em = static_cast<std::size_t>(em_size);
  auto add = [&net](std::string name, Tensor<T> t) {
    net.params.emplace_back(std::move(name), std::move(t));
  };
  // width-1 entry projection onto the stack width
  {
    Tensor<T> w({em, ch});
    detail::glorot_fill(w, em, ch, rng);
    add("entry.w", std::move(w));
    add("entry.b", Tensor<T>({ch}));
  }
  for (int blk = 0; blk < cfg.n_layers / 2; ++blk) {
    for (int half : {1, 2}) {
      Tensor<T> k({3, ch, ch});
      detail::glorot_fill(k, 3 * ch, 3 * ch, rng);
      add(str_cat("block", blk, ".conv", half, ".k"), std::move(k));
      add(str_cat("block", blk, ".conv", half, ".b"), Tensor<T>({ch}));
    }
  }
  // head: width-1 conv to a single channel, then batch norm, then softplus
  {
    Tensor<T> w({ch, std::size_t{1}});
    detail::glorot_fill(w, ch, 1, rng);
    add("head.w", std::move(w));
    add("head.b", Tensor<T>({1}));
    add("head.bn.gamma", Tensor<T>({1}, T{1}));
    add("head.bn.beta", Tensor<T>({1}));
  }
  return net;
}

// Mask head over a [B x L x em] embedding; returns a [B x L] node of
// nonnegative mask values.
template <typename T>
NodeId explainer_forward(Graph<T>& g, ExplainerNet<T>& net, NodeId embedded,
                         bool training) {
  const Tensor<T>& ev = g.value(embedded);
  if (ev.rank() != 3 || ev.dim(2) != static_cast<std::size_t>(net.em_size))
    raise<ShapeError>("explainer: expected [B x L x ", net.em_size,
                      "] embedding, got ", shape_str(ev.shape()));
  const std::size_t batch = ev.dim(0), len = ev.dim(1);

  auto use = [&](std::string_view name) { return g.param(net.find(name)); };
  NodeId x = dense(g, embedded, use("entry.w"), use("entry.b"), Act::Selu);
  for (int blk = 0; blk < net.n_layers / 2; ++blk) {
    NodeId y = activation(
        g,
        conv1d_same3(g, x, use(str_cat("block", blk, ".conv1.k")),
                     use(str_cat("block", blk, ".conv1.b"))),
        Act::Selu);
    y = activation(g,
                   conv1d_same3(g, y, use(str_cat("block", blk, ".conv2.k")),
                                use(str_cat("block", blk, ".conv2.b"))),
                   Act::Selu);
    x = add(g, x, y);
  }
  NodeId pre = dense(g, x, use("head.w"), use("head.b"), Act::Linear);
  NodeId bn = batchnorm(g, pre, use("head.bn.gamma"), use("head.bn.beta"),
                        &net.head_bn, training);
  NodeId soft = activation(g, bn, Act::Softplus);
  return reshape(g, soft, {batch, len});
}

// Scales each position's embedding vector by that position's mask value.
// Rejects negative masks, which would violate the softplus contract.
template <typename T>
NodeId apply_mask(Graph<T>& g, NodeId embedded, NodeId mask) {
  const Tensor<T>& mv = g.value(mask);
  for (std::size_t i = 0; i < mv.size(); ++i)
    if (mv[i] < T{0}) raise("apply_mask: negative mask value at ", i);
  return mul_positions(g, embedded, mask);
}

// Loss = squared fidelity error + 1e-6 * ||mask||_2 + 0.05 * H(mask),
// each per element, averaged over the batch.
template <typename T>
NodeId mask_loss(Graph<T>& g, NodeId base_out, const Tensor<T>& targets,
                 NodeId mask, const Tensor<T>& content,
                 const ExplainerConfig& cfg) {
  NodeId fid = sq_err_rows(g, base_out, targets);
  NodeId l2 = scale(g, row_norm2(g, mask, content),
                    static_cast<T>(cfg.l2_weight));
  NodeId ent = scale(g, row_entropy(g, mask, content),
                     static_cast<T>(cfg.entropy_weight));
  return mean_all(g, add(g, add(g, fid, l2), ent));
}

struct ExplainerEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  double learning_rate = 0.0;
};

struct ExplainerHistory {
  std::vector<ExplainerEpoch> epochs;
  std::vector<double> lr_trace;
};

namespace detail {

template <typename T>
Tensor<T> content_weights(const std::vector<const EncodedSmiles*>& rows) {
  Tensor<T> w({rows.size(), kEncodedLength});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = rows[r]->content_begin; c < rows[r]->content_end; ++c)
      w[r * kEncodedLength + c] = T{1};
  return w;
}

}  // namespace detail

// Trains the explanation mask end-to-end against the frozen base model with
// Adam and a divide-on-plateau learning-rate schedule. The base weights are
// hash-audited before and after; any drift is a hard error.
template <typename T>
ExplainerHistory train_explainer(ExplainerNet<T>& net, Model<T>& base,
                                 const Dataset& ds,
                                 const std::vector<std::size_t>& train_rows,
                                 const ExplainerConfig& cfg) {
  if (base.task.type != TaskType::Regression || base.task.n_outputs != 1)
    raise("explainer training expects a scalar regression base model");
  const std::uint64_t base_hash_before = weights_hash(base);

  // encode every training row once
  std::vector<EncodedSmiles> encs;
  encs.reserve(train_rows.size());
  for (std::size_t r : train_rows)
    encs.push_back(encode(ds.records[r].smiles, base.vocab));

  auto params = net.trainable();
  Adam<T> opt(static_cast<T>(cfg.lr_start));
  ExplainerHistory hist;
  hist.lr_trace.push_back(cfg.lr_start);

  Rng order_rng(derive_seed(cfg.seed, "explainer-shuffle"));
  std::vector<std::size_t> order(train_rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double lr = cfg.lr_start;
  double best_loss = std::numeric_limits<double>::infinity();
  int stall = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0, weight = 0.0;
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t stop = std::min(order.size(), start + bs);
      const std::size_t nb = stop - start;
      if (nb < 2) continue;  // batch norm needs at least two rows

      IndexMatrix idx(nb, kEncodedLength);
      std::vector<const EncodedSmiles*> rows(nb);
      Tensor<T> targets({nb});
      for (std::size_t i = 0; i < nb; ++i) {
        const auto& enc = encs[order[start + i]];
        rows[i] = &enc;
        std::copy(enc.indices.begin(), enc.indices.end(),
                  idx.v.begin() + static_cast<std::ptrdiff_t>(i * kEncodedLength));
        targets[i] =
            static_cast<T>(ds.records[train_rows[order[start + i]]].labels[0]);
      }
      const Tensor<T> content = detail::content_weights<T>(rows);

      zero_grads(params);
      Graph<T> g;
      NodeId emb = model_embed(g, base, idx, /*freeze=*/true);
      NodeId mask = explainer_forward(g, net, emb, /*training=*/true);
      if (!cfg.target_is_label) {
        // match the base model's own unmasked output instead of the label
        Graph<T> gp;
        NodeId raw = model_forward(gp, base, idx, /*freeze=*/true);
        for (std::size_t i = 0; i < nb; ++i) targets[i] = gp.value(raw)[i];
      }
      NodeId masked = apply_mask(g, emb, mask);
      NodeId out = model_tail(g, base, masked, /*freeze=*/true);
      NodeId loss = mask_loss(g, out, targets, mask, content, cfg);
      const double lv = static_cast<double>(g.value(loss)[0]);
      if (!std::isfinite(lv))
        raise("explainer training diverged: non-finite loss at epoch ", epoch);
      g.backward(loss);
      opt.step(params);
      loss_sum += lv * static_cast<double>(nb);
      weight += static_cast<double>(nb);
    }
    const double epoch_loss = loss_sum / weight;
    hist.epochs.push_back(ExplainerEpoch{epoch, epoch_loss, lr});

    if (epoch_loss < best_loss * (1.0 - cfg.plateau_rel_delta)) {
      best_loss = epoch_loss;
      stall = 0;
    } else {
      ++stall;
      if (stall >= cfg.plateau_patience) {
        if (lr <= cfg.lr_floor * (1.0 + 1e-12)) break;  // converged
        lr = std::max(lr / cfg.lr_divisor, cfg.lr_floor);
        opt.set_learning_rate(static_cast<T>(lr));
        hist.lr_trace.push_back(lr);
        stall = 0;
      }
    }
  }

  if (weights_hash(base) != base_hash_before)
    raise("explainer training mutated the frozen base model");
  return hist;
}

struct MaskReport {
  std::string smiles;
  std::vector<double> raw;         // length 270
  std::vector<double> normalized;  // content positions sum to 1
  std::size_t content_begin = 0;
  std::size_t content_end = 0;

  std::size_t content_length() const { return content_end - content_begin; }
};

// Deterministic mask extraction (batch norm in inference mode).
template <typename T>
std::vector<MaskReport> compute_masks(ExplainerNet<T>& net, Model<T>& base,
                                      const std::vector<std::string>& smiles) {
  std::vector<MaskReport> out;
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < smiles.size(); start += chunk) {
    const std::size_t stop = std::min(smiles.size(), start + chunk);
    const std::size_t nb = stop - start;
    IndexMatrix idx(nb, kEncodedLength);
    std::vector<EncodedSmiles> encs(nb);
    for (std::size_t i = 0; i < nb; ++i) {
      encs[i] = encode(smiles[start + i], base.vocab);
      std::copy(encs[i].indices.begin(), encs[i].indices.end(),
                idx.v.begin() + static_cast<std::ptrdiff_t>(i * kEncodedLength));
    }
    Graph<T> g;
    NodeId emb = model_embed(g, base, idx, /*freeze=*/true);
    NodeId mask = explainer_forward(g, net, emb, /*training=*/false);
    const Tensor<T>& mv = g.value(mask);
    for (std::size_t i = 0; i < nb; ++i) {
      MaskReport rep;
      rep.smiles = smiles[start + i];
      rep.content_begin = encs[i].content_begin;
      rep.content_end = encs[i].content_end;
      rep.raw.resize(kEncodedLength);
      rep.normalized.assign(kEncodedLength, 0.0);
      double sum = 0.0;
      for (std::size_t c = 0; c < kEncodedLength; ++c) {
        const double v = static_cast<double>(mv[i * kEncodedLength + c]);
        if (v < 0.0) raise("mask violated nonnegativity at position ", c);
        rep.raw[c] = v;
        if (c >= rep.content_begin && c < rep.content_end) sum += v;
      }
      if (sum > 0.0)
        for (std::size_t c = rep.content_begin; c < rep.content_end; ++c)
          rep.normalized[c] = rep.raw[c] / sum;
      out.push_back(std::move(rep));
    }
  }
  return out;
}

template <typename T>
MaskReport compute_mask(ExplainerNet<T>& net, Model<T>& base,
                        const std::string& smiles) {
  return compute_masks(net, base, std::vector<std::string>{smiles})[0];
}

struct TopChar {
  std::size_t position = 0;  // offset into the SMILES string
  char character = '?';
  double weight = 0.0;
};

// k highest normalized weights among content positions; ties break to the
// leftmost position, pads are never eligible.
inline std::vector<TopChar> top_k_chars(const MaskReport& mask,
                                        std::size_t k = 3) {
  const std::size_t n = mask.content_length();
  if (k > n)
    raise("top_k_chars: k=", k, " exceeds content length ", n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return mask.normalized[mask.content_begin + a] >
           mask.normalized[mask.content_begin + b];
  });
  std::vector<TopChar> out;
  for (std::size_t i = 0; i < k; ++i) {
    TopChar tc;
    tc.position = idx[i];
    tc.character = mask.smiles[idx[i]];
    tc.weight = mask.normalized[mask.content_begin + idx[i]];
    out.push_back(tc);
  }
  return out;
}

struct MoleculeAttribution {
  std::string smiles;
  double label = 0.0;
  double prediction = 0.0;
  bool soluble_group = false;  // true: soluble extreme, false: insoluble
  std::vector<TopChar> top3;
  int correct_chars = 0;
};

struct InterpretabilityReport {
  double per_character_accuracy = 0.0;
  double per_molecule_majority_accuracy = 0.0;
  std::size_t n_soluble = 0;
  std::size_t n_insoluble = 0;
  std::vector<MoleculeAttribution> molecules;
};

// Scores top-3 characters on the solubility extremes: soluble molecules
// should attend to hydrophilic characters, insoluble ones to hydrophobic
// characters. Reports both the per-character accuracy and the
// per-molecule-majority variant.
template <typename T>
InterpretabilityReport interpretability_accuracy(
    ExplainerNet<T>& net, Model<T>& base, const Dataset& ds,
    const std::vector<std::size_t>& rows, double soluble_cutoff = -1.0,
    double insoluble_cutoff = -5.0) {
  std::vector<std::size_t> extremes;
  for (std::size_t r : rows) {
    const double y = ds.records[r].labels[0];
    if (y > soluble_cutoff || y < insoluble_cutoff) extremes.push_back(r);
  }
  if (extremes.empty())
    raise("interpretability: no molecule beyond either cutoff");

  std::vector<std::string> smiles;
  for (std::size_t r : extremes) smiles.push_back(ds.records[r].smiles);
  auto masks = compute_masks(net, base, smiles);

  // predictions for the report
  std::vector<EncodedSmiles> encs;
  for (const auto& s : smiles) encs.push_back(encode(s, base.vocab));
  Tensor<T> preds = predict(base, make_batch(encs, base.vocab));

  InterpretabilityReport rep;
  std::size_t correct = 0, majority_hits = 0;
  for (std::size_t i = 0; i < extremes.size(); ++i) {
    const double y = ds.records[extremes[i]].labels[0];
    MoleculeAttribution mol;
    mol.smiles = smiles[i];
    mol.label = y;
    mol.prediction = static_cast<double>(preds[i]);
    mol.soluble_group = y > soluble_cutoff;
    (mol.soluble_group ? rep.n_soluble : rep.n_insoluble)++;
    const auto classes = classify_chars(mol.smiles);
    mol.top3 = top_k_chars(masks[i], 3);
    for (const auto& tc : mol.top3) {
      const HydroClass want = mol.soluble_group ? HydroClass::Hydrophilic
                                                : HydroClass::Hydrophobic;
      if (classes[tc.position] == want) ++mol.correct_chars;
    }
    correct += static_cast<std::size_t>(mol.correct_chars);
    if (mol.correct_chars >= 2) ++majority_hits;
    rep.molecules.push_back(std::move(mol));
  }
  rep.per_character_accuracy =
      static_cast<double>(correct) / (3.0 * static_cast<double>(extremes.size()));
  rep.per_molecule_majority_accuracy =
      static_cast<double>(majority_hits) / static_cast<double>(extremes.size());
  return rep;
}

// JSON-lines attribution export: one record per molecule.
inline void write_attribution_report(const InterpretabilityReport& rep,
                                     const std::vector<MaskReport>& masks,
                                     std::ostream& os) {
  for (std::size_t i = 0; i < rep.molecules.size(); ++i) {
    const auto& mol = rep.molecules[i];
    nlohmann::json j;
    j["smiles"] = mol.smiles;
    j["label"] = mol.label;
    j["prediction"] = mol.prediction;
    j["group"] = mol.soluble_group ? "soluble" : "insoluble";
    if (i < masks.size()) {
      j["mask_raw"] = masks[i].raw;
      j["mask_normalized"] = masks[i].normalized;
    }
    nlohmann::json top = nlohmann::json::array();
    const auto classes = classify_chars(mol.smiles);
    for (const auto& tc : mol.top3) {
      top.push_back({{"position", tc.position},
                     {"char", std::string(1, tc.character)},
                     {"weight", tc.weight},
                     {"hydro_class", to_string(classes[tc.position])}});
    }
    j["top3"] = top;
    j["correct_chars"] = mol.correct_chars;
    os << j.dump() << "\n";
  }
}

}  // namespace smipred

// explainer checkpoints reuse the model container's record format
namespace smipred {

template <typename T>
void save_explainer(const ExplainerNet<T>& net, const std::string& path) {
  nlohmann::json meta;
  meta["container"] = "smipred-explainer";
  meta["channels"] = net.channels;
  meta["n_layers"] = net.n_layers;
  meta["em_size"] = net.em_size;
  const std::string meta_str = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) raise<IoError>("cannot write explainer file ", path);
  out.write(detail::kModelMagic, sizeof(detail::kModelMagic));
  const std::uint32_t ver = detail::kModelVersion;
  out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  const std::uint64_t len = meta_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  std::vector<NamedTensorF32> records;
  for (const auto& p : net.params) records.push_back(to_f32_record(p));
  // running statistics ride along as named tensors
  Variable<T> rm("head.bn.running_mean", net.head_bn.running_mean, false);
  Variable<T> rv("head.bn.running_var", net.head_bn.running_var, false);
  records.push_back(to_f32_record(rm));
  records.push_back(to_f32_record(rv));
  write_checkpoint(out, records);
  if (!out) raise<IoError>("explainer write failed: ", path);
}

template <typename T>
ExplainerNet<T> load_explainer(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise<IoError>("cannot read explainer file ", path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) ||
      std::memcmp(magic, detail::kModelMagic, sizeof(magic)) != 0)
    raise<IoError>("not an explainer container: ", path);
  std::uint32_t ver = 0;
  in.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  if (ver != detail::kModelVersion)
    throw CheckpointVersionError(
        str_cat("unsupported explainer container version ", ver));
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (in.gcount() != sizeof(len) || len > (1ull << 30))
    throw CheckpointTruncatedError("explainer container truncated");
  std::string meta_str(len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(in.gcount()) != len)
    throw CheckpointTruncatedError("explainer container truncated");
  const auto meta = nlohmann::json::parse(meta_str);

  ExplainerConfig cfg;
  cfg.channels = meta["channels"].get<int>();
  cfg.n_layers = meta["n_layers"].get<int>();
  ExplainerNet<T> net =
      build_explainer<T>(meta["em_size"].get<int>(), cfg, 0);
  const auto records = read_checkpoint(in);
  std::map<std::string, const NamedTensorF32*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  for (auto& p : net.params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      raise<IoError>("explainer container is missing tensor '", p.name, "'");
    from_f32_record(*it->second, p);
  }
  auto rm = by_name.find("head.bn.running_mean");
  auto rv = by_name.find("head.bn.running_var");
  if (rm == by_name.end() || rv == by_name.end())
    raise<IoError>("explainer container is missing batch-norm statistics");
  for (std::size_t i = 0; i < net.head_bn.running_mean.size(); ++i) {
    net.head_bn.running_mean[i] = static_cast<T>(rm->second->values[i]);
    net.head_bn.running_var[i] = static_cast<T>(rv->second->values[i]);
  }
  return net;
}

}  // namespace smipred
