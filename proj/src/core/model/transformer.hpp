// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lora/adapter.hpp"
#include "numerics/optim.hpp"
#include "quant/nf4.hpp"

namespace prunekit::model {

using numerics::Tensor;

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr std::size_t kDefaultMaxDecode = 1024;

struct ModelConfig {
  std::size_t vocab_size = 64;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t encoder_layers = 8;
  std::size_t decoder_layers = 8;
  std::size_t max_positions = 64;
  double dropout = 0.0;

  bool operator==(const ModelConfig&) const = default;
};

void validate(const ModelConfig& config);

enum class Pool : std::uint8_t { kEncoder = 0, kDecoder = 1 };

const char* pool_name(Pool p);
Pool parse_pool(const std::string& s);

struct LayerId {
  Pool pool = Pool::kDecoder;
  int original_index = 0;

  auto operator<=>(const LayerId&) const = default;
  std::string str() const;
};

// A linear map y = x W^T + b with W stored [out x in]. The weight is either
// full precision or NF4-quantized (then frozen and dequantized per call),
// optionally with a low-rank adapter on top.
struct Linear {
  Tensor weight;
  Tensor bias;
  std::optional<quant::QuantizedTensor> quantized;
  std::optional<lora::LoraAdapter> adapter;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;

  Tensor forward(const Tensor& x, Rng* dropout_rng = nullptr) const;
  // Full-precision view of the base weight (dequantized when quantized).
  Tensor base_weight() const;
  bool is_quantized() const { return quantized.has_value(); }
};

struct Norm {
  Tensor gain;
  Tensor bias;
};

struct Attention {
  Linear q, k, v, o;
};

struct FeedForward {
  Linear in, out;
};

struct EncoderLayer {
  LayerId id;
  Norm ln1, ln2;
  Attention self_attn;
  FeedForward ffn;
};

struct DecoderLayer {
  LayerId id;
  Norm ln1, ln2, ln3;
  Attention self_attn;
  Attention cross_attn;
  FeedForward ffn;
};

// Analytic sizes for the current architecture.
std::size_t attention_params(std::size_t d);
std::size_t ffn_params(std::size_t d, std::size_t f);
std::size_t encoder_layer_params(const ModelConfig& c);
std::size_t decoder_layer_params(const ModelConfig& c);
std::size_t layer_params(const ModelConfig& c, Pool pool);
// Closed-form parameter count of a model with the given stack depths.
std::size_t analytic_param_count(const ModelConfig& c, std::size_t encoder_layers, std::size_t decoder_layers);

class TransformerModel {
 public:
  TransformerModel() = default;

  static TransformerModel build(const ModelConfig& config, Rng& rng);

  // Explicit deep copy; copying the object itself shares tensors.
  TransformerModel clone() const;

  const ModelConfig& config() const { return config_; }
  const std::vector<EncoderLayer>& encoder() const { return encoder_; }
  const std::vector<DecoderLayer>& decoder() const { return decoder_; }
  std::vector<EncoderLayer>& encoder() { return encoder_; }
  std::vector<DecoderLayer>& decoder() { return decoder_; }
  std::vector<LayerId> layer_ids(Pool pool) const;
  bool has_layer(const LayerId& id) const;
  std::size_t depth(Pool pool) const { return pool == Pool::kEncoder ? encoder_.size() : decoder_.size(); }

  // Memory of the encoder, [source_len x d_model].
  Tensor encode(std::span<const int> source, Rng* dropout_rng = nullptr) const;
  // Logits [prefix_len x vocab] for a decoder input that starts with bos.
  Tensor decode(const Tensor& memory, std::span<const int> target_prefix, Rng* dropout_rng = nullptr) const;
  Tensor forward(std::span<const int> source, std::span<const int> target_prefix,
                 Rng* dropout_rng = nullptr) const;

  // Argmax decoding from bos until eos or max_len tokens; the returned list
  // includes the eos token when one was produced. Exact logit ties resolve to
  // the lowest token id. Output length is also bounded by max_positions.
  std::vector<int> greedy_decode(std::span<const int> source, std::size_t max_len = kDefaultMaxDecode) const;

  // Excises one layer. The remaining layers keep their ids and order.
  void remove_layer(const LayerId& id);

  // Logical parameter count: quantized matrices count their elements,
  // adapters are excluded (see adapter_param_count).
  std::size_t param_count() const;
  std::size_t adapter_param_count() const;
  std::size_t pool_param_count(Pool pool) const;

  using LinearVisitor = std::function<void(const std::string&, Linear&)>;
  using ConstLinearVisitor = std::function<void(const std::string&, const Linear&)>;
  using TensorVisitor = std::function<void(const std::string&, Tensor&)>;
  using ConstTensorVisitor = std::function<void(const std::string&, const Tensor&)>;

  // Every linear module in a stable order: layers ascending by original
  // index, encoder before decoder, output projection last. The mutate_*
  // variants hand out mutable references.
  void mutate_linears(const LinearVisitor& fn);
  void for_each_linear(const ConstLinearVisitor& fn) const;
  // Every full-precision base tensor (embeddings, norms, biases and
  // unquantized weights). Quantized weights and adapter factors are not
  // visited.
  void mutate_tensors(const TensorVisitor& fn);
  void for_each_tensor(const ConstTensorVisitor& fn) const;

  // Tensors that currently require grad, including adapter factors.
  std::vector<numerics::NamedTensor> trainable_parameters();
  std::size_t trainable_param_count() const;
  void set_base_trainable(bool on);
  bool has_adapters() const;
  bool any_quantized() const;

  // Used by checkpoint loading to assemble a model from parts.
  static TransformerModel skeleton(const ModelConfig& config, const std::vector<int>& encoder_ids,
                                   const std::vector<int>& decoder_ids);

 private:
  Tensor embed(const Tensor& table, std::span<const int> ids, Rng* dropout_rng) const;

  ModelConfig config_;
  Tensor src_embed_, tgt_embed_, pos_embed_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Norm encoder_norm_, decoder_norm_;
  Linear out_proj_;
};

}  // namespace prunekit::model
