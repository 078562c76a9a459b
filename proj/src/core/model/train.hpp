// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "model/transformer.hpp"

namespace prunekit::model {

struct TrainExample {
  std::vector<int> source;
  std::vector<int> target;  // without bos/eos
};

struct TrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 4;
  double learning_rate = 3e-4;
  double weight_decay = 0.001;
  double max_grad_norm = 1.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;
  bool shuffle = true;
};

struct TrainResult {
  std::vector<double> loss_curve;  // mean token loss of each optimizer step
  std::size_t steps = 0;
};

// Teacher-forced cross-entropy training of every parameter that requires
// grad, with fresh AdamW state. Throws a numeric error naming the step when
// the loss becomes NaN.
TrainResult train_full(TransformerModel& m, const std::vector<TrainExample>& data, const TrainConfig& cfg);

// Mean token-level cross-entropy without building a graph.
double evaluate_loss(const TransformerModel& m, const std::vector<TrainExample>& data);

}  // namespace prunekit::model
