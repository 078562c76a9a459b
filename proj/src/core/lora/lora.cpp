// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lora/lora.hpp"

#include <cmath>

namespace prunekit::lora {

using numerics::Tensor;

void validate(const LoraConfig& c) {
  if (c.rank < 1) fail(ErrorKind::kConfig, "lora: rank must be >= 1");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) fail(ErrorKind::kConfig, "lora: dropout must be in [0,1)");
  if (!std::isfinite(c.alpha)) fail(ErrorKind::kConfig, "lora: alpha must be finite");
}

double lora_scale(std::size_t rank, double alpha, bool rs_lora) {
  const double r = static_cast<double>(rank);
  return rs_lora ? alpha / std::sqrt(r) : alpha / r;
}

LoraAdapter LoraAdapter::create(std::size_t in_dim, std::size_t out_dim, const LoraConfig& config, Rng& rng) {
  validate(config);
  LoraAdapter a;
  a.rank = config.rank;
  a.alpha = config.alpha;
  a.rs_lora = config.rs_lora;
  a.dropout = config.dropout;
  a.scale = lora_scale(config.rank, config.alpha, config.rs_lora);
  a.down = Tensor::randn({config.rank, in_dim}, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng, true);
  for (double& v : a.down.data()) v = static_cast<double>(static_cast<float>(v));
  a.up = Tensor::zeros({out_dim, config.rank}, true);
  return a;
}

LoraAdapter LoraAdapter::clone() const {
  LoraAdapter c = *this;
  c.down = down.clone();
  c.up = up.clone();
  return c;
}

Tensor adapter_forward(const Tensor& base_weight, const Tensor& bias, const LoraAdapter* adapter, const Tensor& x,
                       Rng* dropout_rng) {
  Tensor y = numerics::matmul_nt(x, base_weight);
  if (bias.defined()) y = numerics::add_row(y, bias);
  if (adapter) {
    if (adapter->down.cols() != x.cols() || adapter->up.rows() != y.cols()) {
      fail(ErrorKind::kDimension, "adapter_forward: adapter " + numerics::shape_str(adapter->up.shape()) + " x " +
                                      numerics::shape_str(adapter->down.shape()) + " does not fit input " +
                                      numerics::shape_str(x.shape()));
    }
    const Tensor xin = (dropout_rng && adapter->dropout > 0) ? numerics::dropout(x, adapter->dropout, *dropout_rng) : x;
    const Tensor low = numerics::matmul_nt(xin, adapter->down);
    y = numerics::add(y, numerics::scale(numerics::matmul_nt(low, adapter->up), adapter->scale));
  }
  return y;
}

void attach_adapters(model::TransformerModel& m, const LoraConfig& config, Rng& rng) {
  validate(config);
  m.for_each_linear(model::TransformerModel::ConstLinearVisitor([](const std::string& name, const model::Linear& l) {
    if (l.adapter) fail(ErrorKind::kRefused, "attach_adapters: " + name + " already has an adapter");
  }));
  m.mutate_linears(model::TransformerModel::LinearVisitor([&](const std::string&, model::Linear& l) {
    l.adapter = LoraAdapter::create(l.in_dim, l.out_dim, config, rng);
  }));
  m.set_base_trainable(false);
}

QloraResult qlora_finetune(model::TransformerModel& m, const std::vector<model::TrainExample>& data,
                           const model::TrainConfig& train_cfg) {
  if (!m.has_adapters()) fail(ErrorKind::kConfig, "qlora_finetune: no adapters attached");
  QloraResult r;
  if (!m.any_quantized()) r.notes.push_back("base is not quantized; running plain LoRA fine-tuning");
  m.set_base_trainable(false);
  r.train = model::train_full(m, data, train_cfg);
  return r;
}

void merge_adapters(model::TransformerModel& m) {
  m.for_each_linear(model::TransformerModel::ConstLinearVisitor([](const std::string& name, const model::Linear& l) {
    if (l.adapter && l.quantized) {
      fail(ErrorKind::kRefused, "merge_adapters: " + name +
                                    " has a quantized base; merging would require re-quantizing the merged weight");
    }
  }));
  m.mutate_linears(model::TransformerModel::LinearVisitor([](const std::string&, model::Linear& l) {
    if (!l.adapter) return;
    const auto& a = *l.adapter;
    const std::size_t out = l.out_dim, in = l.in_dim, r = a.rank;
    std::vector<double> delta(out * in);
    numerics::gemm_nn(out, r, in, a.up.data().data(), a.down.data().data(), delta.data(), false);
    auto w = l.weight.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = static_cast<double>(static_cast<float>(w[i] + a.scale * delta[i]));
    }
    l.adapter.reset();
  }));
}

double trainable_fraction(const model::TransformerModel& m) {
  const double total = static_cast<double>(m.param_count() + m.adapter_param_count());
  return static_cast<double>(m.trainable_param_count()) / total;
}

}  // namespace prunekit::lora
