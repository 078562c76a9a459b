// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "lora/lora.hpp"
#include "numerics/gradcheck.hpp"
#include "quant/quantize_model.hpp"
#include "quant/storage.hpp"

using namespace prunekit;
using namespace prunekit::lora;
using numerics::Tensor;
using prunekit::testing::snapshot;
using prunekit::testing::values;

namespace {

const std::vector<int> kSrc = {3, 4, 5, 6};
const std::vector<int> kTgt = {model::kBos, 7, 8, 9};

std::vector<quant::QuantizedTensor> quantized(const model::TransformerModel& m) {
  std::vector<quant::QuantizedTensor> out;
  m.for_each_linear(model::TransformerModel::ConstLinearVisitor([&](const std::string&, const model::Linear& l) {
    if (l.quantized) out.push_back(*l.quantized);
  }));
  return out;
}

void randomize_up(model::TransformerModel& m, Rng& rng, double std) {
  m.mutate_linears(model::TransformerModel::LinearVisitor([&](const std::string&, model::Linear& l) {
    for (double& v : l.adapter->up.data()) v = rng.normal() * std;
  }));
}

}  // namespace

TEST_SUITE("lora.scale") {
  TEST_CASE("rsLoRA and classic scaling") {
    CHECK(lora_scale(64, 128, true) == 16.0);
    CHECK(lora_scale(64, 128, false) == 2.0);
    CHECK(lora_scale(8, 16, false) == 2.0);
    CHECK(lora_scale(4, 8, true) == 4.0);
  }

  TEST_CASE("config validation") {
    CHECK_THROWS_AS(validate(LoraConfig{0, 1, 0, true}), Error);
    CHECK_THROWS_AS(validate(LoraConfig{4, 8, 1.0, true}), Error);
    CHECK_NOTHROW(validate(LoraConfig{}));
  }

  TEST_CASE("rank change rescales the contribution by sqrt(r_old / r_new)") {
    Rng rng(1);
    const Tensor x = Tensor::randn({3, 6}, 1.0, rng);
    const Tensor w = Tensor::zeros({5, 6});
    const Tensor down = Tensor::randn({4, 6}, 1.0, rng);
    const Tensor up = Tensor::randn({5, 4}, 1.0, rng);
    LoraAdapter a;
    a.down = down;
    a.up = up;
    a.rank = 4;
    a.alpha = 8;
    a.scale = lora_scale(4, 8, true);
    const Tensor y4 = adapter_forward(w, {}, &a, x);
    a.rank = 16;
    a.scale = lora_scale(16, 8, true);
    const Tensor y16 = adapter_forward(w, {}, &a, x);
    for (std::size_t i = 0; i < y4.numel(); ++i) {
      CHECK(y16.data()[i] == doctest::Approx(y4.data()[i] * std::sqrt(4.0 / 16.0)).epsilon(1e-12));
    }
  }
}

TEST_SUITE("lora.forward") {
  TEST_CASE("zero up leaves the base output") {
    Rng rng(2);
    const Tensor x = Tensor::randn({2, 5}, 1.0, rng);
    const Tensor w = Tensor::randn({3, 5}, 1.0, rng);
    const Tensor b = Tensor::randn({3}, 1.0, rng);
    const auto a = LoraAdapter::create(5, 3, {2, 4, 0, false}, rng);
    CHECK(values(adapter_forward(w, b, &a, x)) == values(adapter_forward(w, b, nullptr, x)));
  }

  TEST_CASE("rank-1 hand case adds s * x_1 to output 1") {
    const Tensor x = Tensor::from({2, 3}, {1, 2, 3, -4, 5, 6});
    const Tensor w = Tensor::zeros({3, 3});
    LoraAdapter a;
    a.rank = 1;
    a.down = Tensor::from({1, 3}, {1, 0, 0});
    a.up = Tensor::from({3, 1}, {1, 0, 0});
    a.scale = 2.5;
    const Tensor y = adapter_forward(w, {}, &a, x);
    CHECK(values(y) == std::vector<double>{2.5, 0, 0, -10, 0, 0});
  }

  TEST_CASE("shape mismatch is a dimension error") {
    Rng rng(3);
    const auto a = LoraAdapter::create(4, 3, {2, 4, 0, false}, rng);
    try {
      adapter_forward(Tensor::zeros({3, 5}), {}, &a, Tensor::zeros({1, 5}));
      FAIL("accepted a mismatched adapter");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kDimension);
    }
  }

  TEST_CASE("adapter gradients agree with finite differences on random instances") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(50 + seed);
      const std::size_t in = 2 + rng.below(4), out = 1 + rng.below(4), r = 1 + rng.below(3), n = 1 + rng.below(3);
      const Tensor x = Tensor::randn({n, in}, 1.0, rng);
      Tensor w = Tensor::randn({out, in}, 1.0, rng);  // frozen base
      auto a = LoraAdapter::create(in, out, {r, 2.0 * static_cast<double>(r), 0, seed % 2 == 0}, rng);
      for (double& v : a.up.data()) v = rng.normal();
      const Tensor probe = Tensor::randn({n, out}, 1.0, rng);
      std::vector<numerics::NamedTensor> ps = {{"down", a.down}, {"up", a.up}};
      const auto rep = numerics::grad_check(
          [&] { return numerics::sum(numerics::mul(adapter_forward(w, {}, &a, x), probe)); }, ps);
      CHECK(rep.passed());
      CHECK_FALSE(w.has_grad());
    }
  }
}

TEST_SUITE("lora.model") {
  TEST_CASE("attach is bitwise neutral and freezes the base") {
    auto m = testing::tiny_model(3);
    const Tensor before = m.forward(kSrc, kTgt);
    Rng rng(4);
    attach_adapters(m, {4, 8, 0, true}, rng);
    CHECK(values(m.forward(kSrc, kTgt)) == values(before));
    for (const auto& p : m.trainable_parameters()) {
      CHECK((p.name.ends_with(".lora_down") || p.name.ends_with(".lora_up")));
    }
    try {
      attach_adapters(m, {4, 8, 0, true}, rng);
      FAIL("double attach accepted");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kRefused);
    }
  }

  TEST_CASE("attach is neutral on a quantized base") {
    auto m = testing::tiny_model(3);
    quant::quantize_model(m);
    const Tensor before = m.forward(kSrc, kTgt);
    Rng rng(4);
    attach_adapters(m, {4, 8, 0, true}, rng);
    CHECK(values(m.forward(kSrc, kTgt)) == values(before));
  }

  TEST_CASE("trainable fraction equals the rank formula") {
    auto m = testing::tiny_model(3);
    const std::size_t base = m.param_count();
    std::size_t expect = 0;
    m.for_each_linear(model::TransformerModel::ConstLinearVisitor(
        [&](const std::string&, const model::Linear& l) { expect += 4 * (l.in_dim + l.out_dim); }));
    Rng rng(4);
    attach_adapters(m, {4, 8, 0, true}, rng);
    CHECK(m.adapter_param_count() == expect);
    CHECK(m.trainable_param_count() == expect);
    CHECK(trainable_fraction(m) ==
          doctest::Approx(static_cast<double>(expect) / static_cast<double>(base + expect)).epsilon(1e-15));
  }

  TEST_CASE("qlora fine-tuning leaves the quantized base bitwise unchanged and lowers the loss") {
    auto m = testing::tiny_model(5);
    quant::quantize_model(m);
    const auto q_before = quantized(m);
    const auto dense_before = snapshot(m);
    Rng rng(6);
    attach_adapters(m, {4, 8, 0, true}, rng);
    const auto data = testing::copy_examples(16, 16, 7);
    const double loss0 = model::evaluate_loss(m, data);
    model::TrainConfig tc;
    tc.epochs = 3;
    tc.learning_rate = 3e-3;
    tc.weight_decay = 0.0;
    const auto r = qlora_finetune(m, data, tc);
    CHECK(r.notes.empty());
    CHECK(model::evaluate_loss(m, data) < loss0);
    const auto q_after = quantized(m);
    REQUIRE(q_after.size() == q_before.size());
    for (std::size_t i = 0; i < q_after.size(); ++i) CHECK(q_after[i] == q_before[i]);
    CHECK(snapshot(m) == dense_before);
  }

  TEST_CASE("lr 0 keeps adapters zero-effect") {
    auto m = testing::tiny_model(5);
    quant::quantize_model(m);
    const auto before = m.greedy_decode(kSrc, 8);
    const Tensor logits = m.forward(kSrc, kTgt);
    Rng rng(6);
    attach_adapters(m, {4, 8, 0, true}, rng);
    model::TrainConfig tc;
    tc.learning_rate = 0;
    qlora_finetune(m, testing::copy_examples(8, 16, 1), tc);
    CHECK(m.greedy_decode(kSrc, 8) == before);
    CHECK(values(m.forward(kSrc, kTgt)) == values(logits));
  }

  TEST_CASE("plain LoRA on an unquantized base is noted") {
    auto m = testing::tiny_model(5);
    Rng rng(6);
    attach_adapters(m, {2, 4, 0, false}, rng);
    model::TrainConfig tc;
    tc.epochs = 1;
    const auto r = qlora_finetune(m, testing::copy_examples(4, 16, 1), tc);
    CHECK(r.notes.size() == 1);
    auto bare = testing::tiny_model(5);
    CHECK_THROWS_AS(qlora_finetune(bare, testing::copy_examples(4, 16, 1), tc), Error);
  }

  TEST_CASE("merge matches the adapter forward and removes adapters") {
    auto m = testing::tiny_model(8);
    Rng rng(9);
    attach_adapters(m, {4, 8, 0, true}, rng);
    randomize_up(m, rng, 0.05);
    const Tensor with = m.forward(kSrc, kTgt);
    merge_adapters(m);
    CHECK_FALSE(m.has_adapters());
    const Tensor merged = m.forward(kSrc, kTgt);
    double worst = 0;
    for (std::size_t i = 0; i < with.numel(); ++i) worst = std::max(worst, std::abs(with.data()[i] - merged.data()[i]));
    CHECK(worst < 1e-5);
    CHECK(quant::storage_bytes(m).adapter_bytes == 0);
  }

  TEST_CASE("merging zero adapters is a no-op") {
    auto m = testing::tiny_model(8);
    const auto before = snapshot(m);
    Rng rng(9);
    attach_adapters(m, {4, 8, 0, true}, rng);
    merge_adapters(m);
    CHECK(snapshot(m) == before);
  }

  TEST_CASE("merge into a quantized base is refused") {
    auto m = testing::tiny_model(8);
    quant::quantize_model(m);
    Rng rng(9);
    attach_adapters(m, {4, 8, 0, true}, rng);
    try {
      merge_adapters(m);
      FAIL("merged into a quantized base");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kRefused);
      CHECK(std::string(e.what()).find("quantized") != std::string::npos);
    }
  }

  TEST_CASE("adapter storage is counted") {
    auto m = testing::tiny_model(8);
    quant::quantize_model(m);
    const auto before = quant::storage_bytes(m).total_bytes;
    Rng rng(9);
    attach_adapters(m, {4, 8, 0, true}, rng);
    CHECK(quant::storage_bytes(m).total_bytes == before + 4 * m.adapter_param_count());
  }
}
