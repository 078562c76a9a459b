// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "numerics/tensor.hpp"

namespace prunekit::lora {

struct LoraConfig {
  std::size_t rank = 64;
  double alpha = 128.0;
  double dropout = 0.0;
  bool rs_lora = true;
};

void validate(const LoraConfig& config);

// alpha / sqrt(rank) with rank stabilization, alpha / rank without.
double lora_scale(std::size_t rank, double alpha, bool rs_lora);

// Low-rank update `scale * up * down` attached to a frozen [out x in] base.
struct LoraAdapter {
  numerics::Tensor down;  // [rank x in], normal(0, 1/sqrt(in))
  numerics::Tensor up;    // [out x rank], zeros at attach time
  std::size_t rank = 0;
  double alpha = 0.0;
  bool rs_lora = true;
  double dropout = 0.0;
  double scale = 0.0;

  static LoraAdapter create(std::size_t in_dim, std::size_t out_dim, const LoraConfig& config, Rng& rng);
  LoraAdapter clone() const;
  std::size_t param_count() const { return down.numel() + up.numel(); }
};

// y = x W^T + b + scale * (drop(x) down^T) up^T. `bias` may be undefined;
// adapter dropout applies only when a dropout generator is supplied.
numerics::Tensor adapter_forward(const numerics::Tensor& base_weight, const numerics::Tensor& bias,
                                 const LoraAdapter* adapter, const numerics::Tensor& x,
                                 Rng* dropout_rng = nullptr);

}  // namespace prunekit::lora
