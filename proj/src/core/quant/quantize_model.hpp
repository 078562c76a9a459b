// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "model/transformer.hpp"
#include "quant/nf4.hpp"

namespace prunekit::quant {

struct QuantizeOptions {
  std::size_t block_size = kDefaultBlockSize;
  bool double_quant = true;
  std::size_t dq_group = kDefaultDoubleQuantGroup;
};

// Replaces every linear weight matrix with its NF4 encoding and freezes it.
// Biases, norms and embeddings stay in full precision.
void quantize_model(model::TransformerModel& m, const QuantizeOptions& options = {});

// Elements held by linear weight matrices over all logical parameters.
double linear_weight_fraction(const model::TransformerModel& m);

}  // namespace prunekit::quant
