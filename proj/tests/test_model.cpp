//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <fstream>

#include "smipred/model.hpp"
#include "smipred/nn/losses.hpp"
#include "test_util.hpp"

using namespace smipred;

namespace {

Vocabulary test_vocab() {
  return Vocabulary::build({"c1ccncc1", "CC(=O)Oc1ccccc1", "ClCCBr", "N#N"});
}

EncodedBatch encode_all(const std::vector<std::string>& smiles,
                        const Vocabulary& v) {
  std::vector<EncodedSmiles> rows;
  for (const auto& s : smiles) rows.push_back(encode(s, v));
  return make_batch(rows, v);
}

}  // namespace

TEST_CASE("hyperparameter grid validation") {
  TaskSpec reg{TaskType::Regression, 1};
  auto v = test_vocab();
  // the best reported design builds
  CHECK_NOTHROW(
      build_model<float>(ArchClass::CnnGru, {50, 192, 224, 384}, reg, v, 1));
  // off-grid values are rejected
  CHECK_THROWS_AS(
      build_model<float>(ArchClass::CnnGru, {55, 192, 224, 384}, reg, v, 1),
      Error);
  CHECK_THROWS_AS(
      build_model<float>(ArchClass::CnnGru, {50, 193, 224, 384}, reg, v, 1),
      Error);
  CHECK_THROWS_AS(
      build_model<float>(ArchClass::CnnGru, {50, 192, 224, 385}, reg, v, 1),
      Error);
  // conv filters on a plain class are rejected
  CHECK_THROWS_AS(build_model<float>(ArchClass::Gru, {10, 16, 8, 8}, reg, v, 1),
                  Error);
  CHECK_NOTHROW(build_model<float>(ArchClass::Gru, {10, 0, 8, 8}, reg, v, 1));
}

TEST_CASE("same seed builds bit-identical parameters") {
  TaskSpec reg{TaskType::Regression, 1};
  auto v = test_vocab();
  auto a = build_model<double>(ArchClass::CnnGru, {10, 8, 16, 8}, reg, v, 42);
  auto b = build_model<double>(ArchClass::CnnGru, {10, 8, 16, 8}, reg, v, 42);
  CHECK(weights_hash(a) == weights_hash(b));
  auto c = build_model<double>(ArchClass::CnnGru, {10, 8, 16, 8}, reg, v, 43);
  CHECK(weights_hash(a) != weights_hash(c));
}

TEST_CASE("parameter count matches the closed form across the grid") {
  auto v = test_vocab();
  Rng rng(77);
  const ArchClass classes[4] = {ArchClass::Gru, ArchClass::Lstm,
                                ArchClass::CnnGru, ArchClass::CnnLstm};
  // micro case from the formula by hand: GRU em 10, rnn 8/8, 1 output
  {
    TaskSpec reg{TaskType::Regression, 1};
    auto m = build_model<float>(ArchClass::Gru, {10, 0, 8, 8}, reg, v, 1);
    std::size_t actual = 0;
    for (const auto& p : m.params) actual += p.value.size();
    // emb V*10; rnn1 2*(10*24 + 8*24 + 24); rnn2 2*(16*24 + 8*24 + 24); head
    const std::size_t expect = v.size() * 10 + 2 * (10 * 24 + 8 * 24 + 24) +
                               2 * (16 * 24 + 8 * 24 + 24) + 16 + 1;
    CHECK(actual == expect);
    CHECK(parameter_count(ArchClass::Gru, {10, 0, 8, 8}, reg, v.size()) ==
          expect);
  }
  for (int trial = 0; trial < 10; ++trial) {
    const ArchClass arch = classes[trial % 4];
    HyperParams hp;
    hp.em_size = 10 * (1 + static_cast<int>(rng.uniform_int(6)));
    hp.rnn1_units = 8 * (1 + static_cast<int>(rng.uniform_int(48)));
    hp.rnn2_units = 8 * (1 + static_cast<int>(rng.uniform_int(48)));
    hp.conv_filters =
        arch_has_conv(arch) ? 4 * (1 + static_cast<int>(rng.uniform_int(48)))
                            : 0;
    TaskSpec task{trial % 2 ? TaskType::Classification : TaskType::Regression,
                  trial % 2 ? 12 : 1};
    auto m = build_model<float>(arch, hp, task, v, 7);
    std::size_t actual = 0;
    for (const auto& p : m.params) actual += p.value.size();
    CHECK(actual == parameter_count(arch, hp, task, v.size()));
  }
}

TEST_CASE("predict contract: ranges, determinism, batch consistency") {
  auto v = test_vocab();
  TaskSpec cls{TaskType::Classification, 3};
  auto m = build_model<double>(ArchClass::CnnGru, {10, 8, 8, 8}, cls, v, 11);

  std::vector<std::string> smiles{"c1ccncc1", "CC(=O)Oc1ccccc1", "c1ccncc1",
                                  "ClCCBr"};
  auto batch = encode_all(smiles, v);

  const std::uint64_t before = weights_hash(m);
  auto out = predict(m, batch);
  CHECK(weights_hash(m) == before);  // inference is pure

  REQUIRE(out.shape() == Shape{4, 3});
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i] > 0.0);
    CHECK(out[i] < 1.0);
  }
  // duplicate rows give identical outputs
  for (std::size_t c = 0; c < 3; ++c) CHECK(out[0 * 3 + c] == out[2 * 3 + c]);

  // batch-of-n equals row-stacked singles
  for (std::size_t r = 0; r < smiles.size(); ++r) {
    auto single = encode_all({smiles[r]}, v);
    auto o1 = predict(m, single);
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(o1[c] == Catch::Approx(out[r * 3 + c]).margin(1e-6));
  }

  // vocabulary mismatch is rejected
  auto other_vocab = Vocabulary::build({"SNOP"});
  auto bad = encode_all({"SN"}, other_vocab);
  CHECK_THROWS_AS(predict(m, bad), Error);
}

TEST_CASE("composed micro cnn-gru model gradient check") {
  auto v = test_vocab();
  TaskSpec reg{TaskType::Regression, 1};
  auto m = build_model<double>(ArchClass::CnnGru, {10, 4, 8, 8}, reg, v, 3);

  auto enc = encode("c1ccncc1", v);
  // shorten the sequence for the unit test; the acceptance suite runs at 270
  IndexMatrix idx(1, 16);
  for (std::size_t c = 0; c < 16; ++c) idx.at(0, c) = enc.indices[c + 6];

  Tensor<double> target({1});
  target[0] = 0.8;
  auto params = m.trainable();
  auto build = [&](Graph<double>& g) {
    NodeId y = model_forward(g, m, idx, /*freeze=*/false);
    return mae_loss(g, y, target);
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

TEST_CASE("save/load round trip is bit exact in 32-bit mode") {
  auto v = test_vocab();
  TaskSpec cls{TaskType::Classification, 2};
  auto m = build_model<float>(ArchClass::CnnLstm, {20, 8, 16, 8}, cls, v, 9);
  const std::string path = "model_roundtrip.bin";
  save_model(m, path);
  auto m2 = load_model<float>(path);

  CHECK(m2.arch == m.arch);
  CHECK(m2.hp == m.hp);
  CHECK(m2.task == m.task);
  CHECK(m2.vocab == m.vocab);
  CHECK(weights_hash(m2) == weights_hash(m));

  Rng rng(13);
  std::vector<std::string> pool{"c1ccncc1", "CC(=O)Oc1ccccc1", "ClCCBr",
                                "N#N"};
  std::vector<std::string> smiles;
  for (int i = 0; i < 100; ++i)
    smiles.push_back(pool[rng.uniform_int(pool.size())]);
  auto batch = encode_all(smiles, v);
  auto a = predict(m, batch);
  auto b = predict(m2, batch);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  std::remove(path.c_str());
}

TEST_CASE("container detects truncation, corruption and bad versions") {
  auto v = test_vocab();
  TaskSpec reg{TaskType::Regression, 1};
  auto m = build_model<float>(ArchClass::Gru, {10, 0, 8, 8}, reg, v, 5);
  const std::string path = "model_errors.bin";
  save_model(m, path);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();

  {  // truncated
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_model<float>(path), CheckpointTruncatedError);

  {  // flip one payload byte (inside the final bias value): checksum failure
    std::string corrupt = bytes;
    corrupt[corrupt.size() - 10] ^= 0x40;
    std::ofstream out(path, std::ios::binary);
    out.write(corrupt.data(), static_cast<std::streamsize>(corrupt.size()));
  }
  CHECK_THROWS_AS(load_model<float>(path), CheckpointChecksumError);

  {  // container version bump
    std::string vbad = bytes;
    vbad[8] = 99;
    std::ofstream out(path, std::ios::binary);
    out.write(vbad.data(), static_cast<std::streamsize>(vbad.size()));
  }
  CHECK_THROWS_AS(load_model<float>(path), CheckpointVersionError);

  std::remove(path.c_str());
}

TEST_CASE("32-bit checkpoint reloaded at 64 bits predicts within 1e-6") {
  auto v = test_vocab();
  TaskSpec reg{TaskType::Regression, 1};
  auto m32 = build_model<float>(ArchClass::CnnGru, {10, 8, 8, 8}, reg, v, 21);
  const std::string path = "model_precision.bin";
  save_model(m32, path);
  auto m64 = load_model<double>(path);

  auto batch = encode_all({"c1ccncc1", "ClCCBr"}, v);
  auto a = predict(m32, batch);
  auto b = predict(m64, batch);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(static_cast<double>(a[i]) == Catch::Approx(b[i]).margin(1e-6));
  std::remove(path.c_str());
}
