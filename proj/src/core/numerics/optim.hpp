// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "numerics/tensor.hpp"

namespace prunekit::numerics {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct AdamWConfig {
  double learning_rate = 3e-4;
  double weight_decay = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

OptimizerState make_optimizer_state(const std::vector<NamedTensor>& params, const AdamWConfig& config);

// One decoupled-weight-decay Adam update over `params` using their
// accumulated gradients. A parameter without a gradient is treated as having
// a zero gradient. Throws a numeric error naming the parameter on NaN.
void adamw_step(std::vector<NamedTensor>& params, OptimizerState& state);

// Rescales all gradients so their joint L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_grad_norm(std::vector<NamedTensor>& params, double max_norm);

}  // namespace prunekit::numerics
