//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
// The four architecture templates: embedding -> [conv1d + ReLU] -> two
// stacked bidirectional recurrent layers -> dense head. Layer 1 feeds its
// full hidden sequence to layer 2; layer 2 contributes only its final
// forward/backward states, concatenated, to the head.
#pragma once

#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "smipred/nn/checkpoint.hpp"
#include "smipred/nn/layers.hpp"
#include "smipred/rng.hpp"
#include "smipred/smiles.hpp"

namespace smipred {

enum class ArchClass { Gru, Lstm, CnnGru, CnnLstm };

inline const char* to_string(ArchClass a) {
  switch (a) {
    case ArchClass::Gru: return "gru";
    case ArchClass::Lstm: return "lstm";
    case ArchClass::CnnGru: return "cnn-gru";
    case ArchClass::CnnLstm: return "cnn-lstm";
  }
  return "?";
}

inline ArchClass arch_from_string(std::string_view s) {
  if (s == "gru") return ArchClass::Gru;
  if (s == "lstm") return ArchClass::Lstm;
  if (s == "cnn-gru") return ArchClass::CnnGru;
  if (s == "cnn-lstm") return ArchClass::CnnLstm;
  raise("unknown architecture class '", std::string(s),
        "' (expected gru|lstm|cnn-gru|cnn-lstm)");
}

inline bool arch_has_conv(ArchClass a) {
  return a == ArchClass::CnnGru || a == ArchClass::CnnLstm;
}

inline bool arch_uses_gru(ArchClass a) {
  return a == ArchClass::Gru || a == ArchClass::CnnGru;
}

struct HyperParams {
  int em_size = 0;
  int conv_filters = 0;  // 0 for the non-convolutional classes
  int rnn1_units = 0;
  int rnn2_units = 0;

  bool operator==(const HyperParams&) const = default;
};

// Grid from the architecture search: em 10..60 step 10, rnn 8..384 step 8,
// conv 4..192 step 4 (convolutional classes only).
inline void validate_hyperparams(ArchClass arch, const HyperParams& hp) {
  auto on_grid = [](int v, int lo, int hi, int step) {
    return v >= lo && v <= hi && (v - lo) % step == 0;
  };
  if (!on_grid(hp.em_size, 10, 60, 10))
    raise("em_size ", hp.em_size, " is off-grid (10..60 step 10)");
  if (!on_grid(hp.rnn1_units, 8, 384, 8))
    raise("rnn1_units ", hp.rnn1_units, " is off-grid (8..384 step 8)");
  if (!on_grid(hp.rnn2_units, 8, 384, 8))
    raise("rnn2_units ", hp.rnn2_units, " is off-grid (8..384 step 8)");
  if (arch_has_conv(arch)) {
    if (!on_grid(hp.conv_filters, 4, 192, 4))
      raise("conv_filters ", hp.conv_filters, " is off-grid (4..192 step 4)");
  } else if (hp.conv_filters != 0) {
    raise("conv_filters supplied to non-convolutional class ",
          to_string(arch));
  }
}

enum class TaskType { Classification, Regression };

inline const char* to_string(TaskType t) {
  return t == TaskType::Classification ? "classification" : "regression";
}

inline TaskType task_type_from_string(std::string_view s) {
  if (s == "classification") return TaskType::Classification;
  if (s == "regression") return TaskType::Regression;
  raise("unknown task type '", std::string(s), "'");
}

struct TaskSpec {
  TaskType type = TaskType::Regression;
  int n_outputs = 1;

  bool operator==(const TaskSpec&) const = default;
};

template <typename T>
struct Model {
  ArchClass arch = ArchClass::CnnGru;
  HyperParams hp;
  TaskSpec task;
  Vocabulary vocab;
  std::uint64_t init_seed = 0;
  std::vector<Variable<T>> params;

  Variable<T>& find(std::string_view name) {
    for (auto& p : params)
      if (p.name == name) return p;
    raise("model has no parameter '", std::string(name), "'");
  }
  const Variable<T>& find(std::string_view name) const {
    for (const auto& p : params)
      if (p.name == name) return p;
    raise("model has no parameter '", std::string(name), "'");
  }

  std::vector<Variable<T>*> trainable() {
    std::vector<Variable<T>*> out;
    out.reserve(params.size());
    for (auto& p : params) out.push_back(&p);
    return out;
  }
};

namespace detail {

template <typename T>
void glorot_fill(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out,
                 Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.uniform(-limit, limit));
}

// Packed-gate recurrent matrices: each gate block gets its own Glorot fan.
template <typename T>
void recurrent_fill(Tensor<T>& t, std::size_t rows, std::size_t hidden,
                    std::size_t gates, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + hidden));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.uniform(-limit, limit));
  (void)gates;
}

}  // namespace detail

template <typename T>
Model<T> build_model(ArchClass arch, const HyperParams& hp,
                     const TaskSpec& task, const Vocabulary& vocab,
                     std::uint64_t seed, bool enforce_grid = true) {
  if (enforce_grid) validate_hyperparams(arch, hp);
  if (hp.conv_filters != 0 && !arch_has_conv(arch))
    raise("conv_filters supplied to non-convolutional class ", to_string(arch));
  if (task.n_outputs < 1) raise("task needs at least one output");

  Model<T> m;
  m.arch = arch;
  m.hp = hp;
  m.task = task;
  m.vocab = vocab;
  m.init_seed = seed;

  Rng rng(derive_seed(seed, "model-init"));
  const std::size_t v = vocab.size();
  const std::size_t em = static_cast<std::size_t>(hp.em_size);
  const std::size_t cf = static_cast<std::size_t>(hp.conv_filters);
  const std::size_t h1 = static_cast<std::size_t>(hp.rnn1_units);
  const std::size_t h2 = static_cast<std::size_t>(hp.rnn2_units);
  const std::size_t gates = arch_uses_gru(arch) ? 3 : 4;
  const std::size_t c0 = arch_has_conv(arch) ? cf : em;
  const std::size_t n_out = static_cast<std::size_t>(task.n_outputs);

  auto add = [&m](std::string name, Tensor<T> t) {
    m.params.emplace_back(std::move(name), std::move(t));
  };

  {
    Tensor<T> table({v, em});
    detail::glorot_fill(table, v, em, rng);
    add("embedding.table", std::move(table));
  }
  if (arch_has_conv(arch)) {
    Tensor<T> k({3, em, cf});
    detail::glorot_fill(k, 3 * em, 3 * cf, rng);
    add("conv.kernel", std::move(k));
    add("conv.bias", Tensor<T>({cf}));
  }
  auto add_rnn = [&](const std::string& prefix, std::size_t cin,
                     std::size_t hidden) {
    for (const char* dir : {"fwd", "bwd"}) {
      Tensor<T> wx({cin, gates * hidden});
      detail::recurrent_fill(wx, cin, hidden, gates, rng);
      Tensor<T> wh({hidden, gates * hidden});
      detail::recurrent_fill(wh, hidden, hidden, gates, rng);
      Tensor<T> b({gates * hidden});
      if (gates == 4) {
        // LSTM forget-gate bias starts at 1
        for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = T{1};
      }
      add(prefix + "." + dir + ".wx", std::move(wx));
      add(prefix + "." + dir + ".wh", std::move(wh));
      add(prefix + "." + dir + ".b", std::move(b));
    }
  };
  add_rnn("rnn1", c0, h1);
  add_rnn("rnn2", 2 * h1, h2);
  {
    Tensor<T> w({2 * h2, n_out});
    detail::glorot_fill(w, 2 * h2, n_out, rng);
    add("out.w", std::move(w));
    add("out.b", Tensor<T>({n_out}));
  }
  return m;
}

// Closed-form parameter total for a given configuration.
inline std::size_t parameter_count(ArchClass arch, const HyperParams& hp,
                                   const TaskSpec& task,
                                   std::size_t vocab_size) {
  const std::size_t em = static_cast<std::size_t>(hp.em_size);
  const std::size_t cf = static_cast<std::size_t>(hp.conv_filters);
  const std::size_t h1 = static_cast<std::size_t>(hp.rnn1_units);
  const std::size_t h2 = static_cast<std::size_t>(hp.rnn2_units);
  const std::size_t g = arch_uses_gru(arch) ? 3 : 4;
  const std::size_t c0 = arch_has_conv(arch) ? cf : em;
  const std::size_t n = static_cast<std::size_t>(task.n_outputs);
  std::size_t total = vocab_size * em;
  if (arch_has_conv(arch)) total += 3 * em * cf + cf;
  auto rnn = [g](std::size_t cin, std::size_t h) {
    return 2 * (cin * g * h + h * g * h + g * h);  // both directions
  };
  total += rnn(c0, h1) + rnn(2 * h1, h2);
  total += 2 * h2 * n + n;
  return total;
}

// Embedding stage of the forward pass. When `freeze` is set the parameters
// enter the graph as plain inputs: no gradients flow into them and no
// gradient buffers are kept, which is also the inference path.
template <typename T>
NodeId model_embed(Graph<T>& g, Model<T>& m, const IndexMatrix& indices,
                   bool freeze) {
  Variable<T>& table = m.find("embedding.table");
  return embedding(g, indices, freeze ? g.input(table.value) : g.param(table));
}

// Everything after the embedding: optional conv, the two bidirectional
// recurrent layers, and the task head.
template <typename T>
NodeId model_tail(Graph<T>& g, Model<T>& m, NodeId embedded, bool freeze) {
  auto use = [&](std::string_view name) {
    Variable<T>& p = m.find(name);
    return freeze ? g.input(p.value) : g.param(p);
  };
  const bool is_gru = arch_uses_gru(m.arch);
  auto rnn_layer = [&](NodeId x, const std::string& prefix, bool reverse) {
    const std::string d = reverse ? ".bwd" : ".fwd";
    NodeId wx = use(prefix + d + ".wx");
    NodeId wh = use(prefix + d + ".wh");
    NodeId b = use(prefix + d + ".b");
    return is_gru ? gru(g, x, wx, wh, b, reverse)
                  : lstm(g, x, wx, wh, b, reverse);
  };

  NodeId h = embedded;
  if (arch_has_conv(m.arch)) {
    h = activation(
        g, conv1d_same3(g, h, use("conv.kernel"), use("conv.bias")),
        Act::Relu);
  }
  NodeId l1 = concat_last(g, rnn_layer(h, "rnn1", false),
                          rnn_layer(h, "rnn1", true));
  NodeId f2 = rnn_layer(l1, "rnn2", false);
  NodeId b2 = rnn_layer(l1, "rnn2", true);
  const std::size_t last = g.value(f2).dim(1) - 1;
  NodeId final_states =
      concat_last(g, slice_time(g, f2, last), slice_time(g, b2, 0));
  const Act head =
      m.task.type == TaskType::Classification ? Act::Sigmoid : Act::Linear;
  return dense(g, final_states, use("out.w"), use("out.b"), head);
}

template <typename T>
NodeId model_forward(Graph<T>& g, Model<T>& m, const IndexMatrix& indices,
                     bool freeze) {
  return model_tail(g, m, model_embed(g, m, indices, freeze), freeze);
}

// Batched inference. Chunks the input to bound graph memory. The encoding
// must have been produced with the model's vocabulary.
template <typename T>
Tensor<T> predict(Model<T>& m, const EncodedBatch& batch,
                  std::size_t chunk = 256) {
  if (!batch.vocab_hash.empty() && batch.vocab_hash != m.vocab.hash())
    raise("predict: encoding vocabulary does not match the model's");
  const std::size_t n = batch.size();
  const std::size_t n_out = static_cast<std::size_t>(m.task.n_outputs);
  if (n == 0) raise("predict: empty batch");
  Tensor<T> out({n, n_out});
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t stop = std::min(n, start + chunk);
    IndexMatrix part(stop - start, batch.indices.cols);
    std::copy(batch.indices.v.begin() +
                  static_cast<std::ptrdiff_t>(start * batch.indices.cols),
              batch.indices.v.begin() +
                  static_cast<std::ptrdiff_t>(stop * batch.indices.cols),
              part.v.begin());
    Graph<T> g;
    NodeId y = model_forward(g, m, part, /*freeze=*/true);
    const Tensor<T>& yv = g.value(y);
    std::copy(yv.data(), yv.data() + yv.size(),
              out.data() + start * n_out);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> snapshot_weights(const Model<T>& m) {
  std::vector<Tensor<T>> snap;
  snap.reserve(m.params.size());
  for (const auto& p : m.params) snap.push_back(p.value);
  return snap;
}

template <typename T>
void restore_weights(Model<T>& m, const std::vector<Tensor<T>>& snap) {
  if (snap.size() != m.params.size())
    raise("restore_weights: snapshot size mismatch");
  for (std::size_t i = 0; i < snap.size(); ++i) m.params[i].value = snap[i];
}

template <typename T>
std::uint64_t weights_hash(const Model<T>& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : m.params) {
    h = fnv1a64(p.name.data(), p.name.size(), h);
    h = fnv1a64(p.value.data(), p.value.size() * sizeof(T), h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Persistence: JSON metadata block + weight checkpoint in one container.
// ---------------------------------------------------------------------------

namespace detail {
inline constexpr char kModelMagic[8] = {'S', 'M', 'P', 'M', 'D', 'L', '\0', '\0'};
inline constexpr std::uint32_t kModelVersion = 1;
}  // namespace detail

template <typename T>
void save_model(const Model<T>& m, const std::string& path) {
  nlohmann::json meta;
  meta["container"] = "smipred-model";
  meta["arch"] = to_string(m.arch);
  meta["hyperparams"] = {{"em_size", m.hp.em_size},
                         {"conv_filters", m.hp.conv_filters},
                         {"rnn1_units", m.hp.rnn1_units},
                         {"rnn2_units", m.hp.rnn2_units}};
  meta["task"] = {{"type", to_string(m.task.type)},
                  {"n_outputs", m.task.n_outputs}};
  meta["vocab_text"] = m.vocab.to_text();
  meta["vocab_hash"] = m.vocab.hash();
  meta["init_seed"] = m.init_seed;
  const std::string meta_str = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) raise<IoError>("cannot write model file ", path);
  out.write(detail::kModelMagic, sizeof(detail::kModelMagic));
  const std::uint32_t ver = detail::kModelVersion;
  out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  const std::uint64_t len = meta_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  std::vector<NamedTensorF32> records;
  records.reserve(m.params.size());
  for (const auto& p : m.params) records.push_back(to_f32_record(p));
  write_checkpoint(out, records);
  if (!out) raise<IoError>("model write failed: ", path);
}

template <typename T>
Model<T> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise<IoError>("cannot read model file ", path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) ||
      std::memcmp(magic, detail::kModelMagic, sizeof(magic)) != 0)
    raise<IoError>("not a model container: ", path);
  std::uint32_t ver = 0;
  in.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  if (in.gcount() != sizeof(ver))
    throw CheckpointTruncatedError("model container truncated");
  if (ver != detail::kModelVersion)
    throw CheckpointVersionError(
        str_cat("unsupported model container version ", ver));
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (in.gcount() != sizeof(len) || len > (1ull << 30))
    throw CheckpointTruncatedError("model container truncated");
  std::string meta_str(len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(in.gcount()) != len)
    throw CheckpointTruncatedError("model container truncated in metadata");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_str);
  } catch (const nlohmann::json::exception& e) {
    raise<IoError>("model metadata is not valid JSON: ", e.what());
  }
  HyperParams hp{meta["hyperparams"]["em_size"].get<int>(),
                 meta["hyperparams"]["conv_filters"].get<int>(),
                 meta["hyperparams"]["rnn1_units"].get<int>(),
                 meta["hyperparams"]["rnn2_units"].get<int>()};
  TaskSpec task{task_type_from_string(meta["task"]["type"].get<std::string>()),
                meta["task"]["n_outputs"].get<int>()};
  Vocabulary vocab =
      Vocabulary::from_text(meta["vocab_text"].get<std::string>());
  if (meta["vocab_hash"].get<std::string>() != vocab.hash())
    raise<IoError>("model metadata vocabulary hash mismatch");

  Model<T> m = build_model<T>(arch_from_string(meta["arch"].get<std::string>()),
                              hp, task, vocab,
                              meta["init_seed"].get<std::uint64_t>());
  const auto records = read_checkpoint(in);
  if (records.size() != m.params.size())
    raise<IoError>("model container holds ", records.size(),
                   " tensors, expected ", m.params.size());
  std::map<std::string, const NamedTensorF32*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  for (auto& p : m.params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      raise<IoError>("model container is missing tensor '", p.name, "'");
    from_f32_record(*it->second, p);
  }
  return m;
}

}  // namespace smipred
