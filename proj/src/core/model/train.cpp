// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "model/train.hpp"

#include <cmath>
#include <numeric>

namespace prunekit::model {

using namespace numerics;

namespace {

struct TeacherForcing {
  std::vector<int> input;   // bos + target
  std::vector<int> labels;  // target + eos
};

TeacherForcing teacher_forcing(const TrainExample& ex) {
  TeacherForcing tf;
  tf.input.reserve(ex.target.size() + 1);
  tf.input.push_back(kBos);
  tf.input.insert(tf.input.end(), ex.target.begin(), ex.target.end());
  tf.labels = ex.target;
  tf.labels.push_back(kEos);
  return tf;
}

}  // namespace

TrainResult train_full(TransformerModel& m, const std::vector<TrainExample>& data, const TrainConfig& cfg) {
  if (data.empty()) fail(ErrorKind::kArgument, "train_full: empty corpus");
  if (cfg.batch_size == 0) fail(ErrorKind::kArgument, "train_full: batch_size must be positive");
  auto params = m.trainable_parameters();
  AdamWConfig opt;
  opt.learning_rate = cfg.learning_rate;
  opt.weight_decay = cfg.weight_decay;
  OptimizerState state = make_optimizer_state(params, opt);

  Rng order_rng(cfg.seed);
  Rng dropout_rng = order_rng.fork(0x64726f70);
  Rng* drop = m.config().dropout > 0 || m.has_adapters() ? &dropout_rng : nullptr;

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    if (cfg.shuffle) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
    }
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (auto& p : params) p.tensor.zero_grad();
      std::size_t tokens = 0;
      for (std::size_t i = start; i < end; ++i) tokens += data[order[i]].target.size() + 1;
      double batch_loss = 0;
      for (std::size_t i = start; i < end; ++i) {
        const TeacherForcing tf = teacher_forcing(data[order[i]]);
        const Tensor logits = m.forward(data[order[i]].source, tf.input, drop);
        const Tensor loss = cross_entropy(logits, tf.labels);
        const double weight = static_cast<double>(tf.labels.size()) / static_cast<double>(tokens);
        batch_loss += loss.item() * weight;
        if (!params.empty()) scale(loss, weight).backward();
      }
      if (std::isnan(batch_loss)) {
        fail(ErrorKind::kNumeric, "train_full: NaN loss at step " + std::to_string(result.steps));
      }
      if (!params.empty()) {
        clip_grad_norm(params, cfg.max_grad_norm);
        adamw_step(params, state);
      }
      result.loss_curve.push_back(batch_loss);
      ++result.steps;
    }
  }
  for (auto& p : params) p.tensor.zero_grad();
  return result;
}

double evaluate_loss(const TransformerModel& m, const std::vector<TrainExample>& data) {
  NoGradGuard no_grad;
  double total = 0;
  std::size_t tokens = 0;
  for (const auto& ex : data) {
    const TeacherForcing tf = teacher_forcing(ex);
    const Tensor loss = cross_entropy(m.forward(ex.source, tf.input), tf.labels);
    total += loss.item() * static_cast<double>(tf.labels.size());
    tokens += tf.labels.size();
  }
  return tokens ? total / static_cast<double>(tokens) : 0.0;
}

}  // namespace prunekit::model
