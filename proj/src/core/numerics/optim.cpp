// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "numerics/optim.hpp"

#include <cmath>

namespace prunekit::numerics {

OptimizerState make_optimizer_state(const std::vector<NamedTensor>& params, const AdamWConfig& config) {
  OptimizerState s;
  s.config = config;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.tensor.numel(), 0.0);
    s.second_moment.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adamw_step(std::vector<NamedTensor>& params, OptimizerState& state) {
  if (state.first_moment.size() != params.size()) {
    fail(ErrorKind::kDimension, "adamw_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                                    " parameters, got " + std::to_string(params.size()));
  }
  const auto& c = state.config;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].tensor.numel()) {
      fail(ErrorKind::kDimension, "adamw_step: moment shape mismatch for " + params[i].name);
    }
    if (!params[i].tensor.has_grad()) continue;
    for (double g : params[i].tensor.grad()) {
      if (std::isnan(g)) fail(ErrorKind::kNumeric, "adamw_step: NaN gradient in " + params[i].name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].tensor;
    auto w = p.data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const bool has_grad = p.has_grad();
    auto g = p.grad();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = has_grad ? g[j] : 0.0;
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      double wj = w[j] * (1.0 - c.learning_rate * c.weight_decay);
      wj -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
      // Parameters live at single precision; arithmetic is double.
      w[j] = static_cast<double>(static_cast<float>(wj));
    }
  }
}

double clip_grad_norm(std::vector<NamedTensor>& params, double max_norm) {
  double sq = 0;
  for (auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (double& g : p.tensor.mutable_grad()) g *= s;
    }
  }
  return norm;
}

}  // namespace prunekit::numerics
