// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "quant/quantize_model.hpp"

namespace prunekit::quant {

void quantize_model(model::TransformerModel& m, const QuantizeOptions& options) {
  m.for_each_linear([](const std::string& name, const model::Linear& l) {
    if (l.quantized) fail(ErrorKind::kRefused, "quantize_model: " + name + " is already quantized");
    if (l.adapter) fail(ErrorKind::kRefused, "quantize_model: " + name + " already has an adapter attached");
  });
  m.mutate_linears([&](const std::string&, model::Linear& l) {
    l.quantized = quantize_nf4(l.weight, options.block_size, options.double_quant, options.dq_group);
    l.weight = {};
  });
}

double linear_weight_fraction(const model::TransformerModel& m) {
  std::size_t linear = 0;
  m.for_each_linear([&](const std::string&, const model::Linear& l) { linear += l.out_dim * l.in_dim; });
  return static_cast<double>(linear) / static_cast<double>(m.param_count());
}

}  // namespace prunekit::quant
