// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "model/train.hpp"
#include "model/transformer.hpp"

namespace prunekit::testing {

inline model::ModelConfig tiny_config(std::size_t enc = 2, std::size_t dec = 4) {
  model::ModelConfig c;
  c.vocab_size = 16;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.encoder_layers = enc;
  c.decoder_layers = dec;
  c.max_positions = 16;
  return c;
}

inline model::TransformerModel tiny_model(std::uint64_t seed = 1, std::size_t enc = 2, std::size_t dec = 4) {
  Rng rng(seed);
  return model::TransformerModel::build(tiny_config(enc, dec), rng);
}

// Every full-precision tensor, by name.
inline std::map<std::string, std::vector<double>> snapshot(const model::TransformerModel& m) {
  std::map<std::string, std::vector<double>> out;
  m.for_each_tensor(model::TransformerModel::ConstTensorVisitor(
      [&](const std::string& name, const numerics::Tensor& t) { out[name].assign(t.data().begin(), t.data().end()); }));
  return out;
}

inline std::vector<double> values(const numerics::Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline std::vector<model::TrainExample> copy_examples(std::size_t n, std::size_t vocab, std::uint64_t seed,
                                                      std::size_t min_len = 2, std::size_t max_len = 5) {
  Rng rng(seed);
  std::vector<model::TrainExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = min_len + rng.below(max_len - min_len + 1);
    model::TrainExample ex;
    for (std::size_t j = 0; j < len; ++j) ex.source.push_back(3 + static_cast<int>(rng.below(vocab - 3)));
    ex.target = ex.source;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace prunekit::testing
