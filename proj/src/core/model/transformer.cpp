// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "model/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace prunekit::model {

using namespace numerics;

void validate(const ModelConfig& c) {
  auto bad = [](const std::string& m) { fail(ErrorKind::kConfig, "model config: " + m); };
  if (c.vocab_size <= static_cast<std::size_t>(kEos)) bad("vocab_size must exceed the reserved ids");
  if (c.d_model == 0 || c.n_heads == 0 || c.d_ff == 0) bad("widths must be positive");
  if (c.d_model % c.n_heads != 0) bad("d_model must be divisible by n_heads");
  if (c.encoder_layers < 1) bad("encoder_layers must be >= 1");
  if (c.decoder_layers < 1) bad("decoder_layers must be >= 1");
  if (c.max_positions < 2) bad("max_positions must be >= 2");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) bad("dropout must be in [0,1)");
}

const char* pool_name(Pool p) { return p == Pool::kEncoder ? "encoder" : "decoder"; }

Pool parse_pool(const std::string& s) {
  if (s == "encoder") return Pool::kEncoder;
  if (s == "decoder") return Pool::kDecoder;
  fail(ErrorKind::kConfig, "unknown layer pool '" + s + "'");
}

std::string LayerId::str() const { return std::string(pool_name(pool)) + "." + std::to_string(original_index); }

std::size_t attention_params(std::size_t d) { return 4 * (d * d + d); }
std::size_t ffn_params(std::size_t d, std::size_t f) { return d * f + f + f * d + d; }

std::size_t encoder_layer_params(const ModelConfig& c) {
  return attention_params(c.d_model) + ffn_params(c.d_model, c.d_ff) + 2 * (2 * c.d_model);
}

std::size_t decoder_layer_params(const ModelConfig& c) {
  return 2 * attention_params(c.d_model) + ffn_params(c.d_model, c.d_ff) + 3 * (2 * c.d_model);
}

std::size_t layer_params(const ModelConfig& c, Pool pool) {
  return pool == Pool::kEncoder ? encoder_layer_params(c) : decoder_layer_params(c);
}

std::size_t analytic_param_count(const ModelConfig& c, std::size_t enc, std::size_t dec) {
  const std::size_t d = c.d_model, v = c.vocab_size;
  const std::size_t embeddings = 2 * v * d + c.max_positions * d;
  const std::size_t final_norms = 2 * (2 * d);
  const std::size_t projection = d * v + v;
  return embeddings + enc * encoder_layer_params(c) + dec * decoder_layer_params(c) + final_norms + projection;
}

// ---- Linear ----------------------------------------------------------------

Tensor Linear::base_weight() const { return quantized ? quant::dequantize(*quantized) : weight; }

Tensor Linear::forward(const Tensor& x, Rng* dropout_rng) const {
  return lora::adapter_forward(base_weight(), bias, adapter ? &*adapter : nullptr, x, dropout_rng);
}

namespace {

Tensor round_to_float(Tensor t) {
  for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
  return t;
}

Linear make_linear(std::size_t in, std::size_t out, double stddev, Rng& rng) {
  Linear l;
  l.in_dim = in;
  l.out_dim = out;
  l.weight = round_to_float(Tensor::randn({out, in}, stddev, rng, true));
  l.bias = Tensor::zeros({out}, true);
  return l;
}

Norm make_norm(std::size_t d) { return {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)}; }

Attention make_attention(std::size_t d, double out_std, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  Attention a;
  a.q = make_linear(d, d, s, rng);
  a.k = make_linear(d, d, s, rng);
  a.v = make_linear(d, d, s, rng);
  a.o = make_linear(d, d, out_std, rng);
  return a;
}

FeedForward make_ffn(std::size_t d, std::size_t f, double out_std, Rng& rng) {
  FeedForward ff;
  ff.in = make_linear(d, f, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  ff.out = make_linear(f, d, out_std * std::sqrt(static_cast<double>(d) / static_cast<double>(f)), rng);
  return ff;
}

Tensor norm_apply(const Norm& n, const Tensor& x) { return layer_norm(x, n.gain, n.bias); }

Tensor residual_dropout(const Tensor& x, double p, Rng* rng) { return (rng && p > 0) ? dropout(x, p, *rng) : x; }

Tensor attend(const Attention& a, const Tensor& x, const Tensor& kv, std::size_t heads, bool causal, Rng* rng) {
  const Tensor q = a.q.forward(x, rng);
  const Tensor k = a.k.forward(kv, rng);
  const Tensor v = a.v.forward(kv, rng);
  return a.o.forward(attention(q, k, v, heads, causal), rng);
}

Tensor feed_forward(const FeedForward& f, const Tensor& x, Rng* rng) {
  return f.out.forward(gelu(f.in.forward(x, rng)), rng);
}

Linear clone_linear(const Linear& l) {
  Linear c = l;
  c.weight = l.weight.clone();
  c.bias = l.bias.clone();
  if (l.adapter) c.adapter = l.adapter->clone();
  return c;
}

Norm clone_norm(const Norm& n) { return {n.gain.clone(), n.bias.clone()}; }

Attention clone_attention(const Attention& a) {
  return {clone_linear(a.q), clone_linear(a.k), clone_linear(a.v), clone_linear(a.o)};
}

FeedForward clone_ffn(const FeedForward& f) { return {clone_linear(f.in), clone_linear(f.out)}; }

// Shared traversal for the const and mutable visitors.
template <class Model, class LinearFn>
void visit_linears(Model& m, const LinearFn& fn) {
  auto attn = [&](const std::string& p, auto& a) {
    fn(p + ".q", a.q);
    fn(p + ".k", a.k);
    fn(p + ".v", a.v);
    fn(p + ".o", a.o);
  };
  for (auto& l : m.encoder()) {
    const std::string p = "encoder." + std::to_string(l.id.original_index);
    attn(p + ".self_attn", l.self_attn);
    fn(p + ".ffn.in", l.ffn.in);
    fn(p + ".ffn.out", l.ffn.out);
  }
  for (auto& l : m.decoder()) {
    const std::string p = "decoder." + std::to_string(l.id.original_index);
    attn(p + ".self_attn", l.self_attn);
    attn(p + ".cross_attn", l.cross_attn);
    fn(p + ".ffn.in", l.ffn.in);
    fn(p + ".ffn.out", l.ffn.out);
  }
}

}  // namespace

// ---- construction ----------------------------------------------------------

TransformerModel TransformerModel::build(const ModelConfig& config, Rng& rng) {
  validate(config);
  TransformerModel m;
  m.config_ = config;
  const std::size_t d = config.d_model;
  const double residual_std =
      1.0 / std::sqrt(static_cast<double>(d)) /
      std::sqrt(2.0 * static_cast<double>(config.encoder_layers + config.decoder_layers));
  m.src_embed_ = round_to_float(Tensor::randn({config.vocab_size, d}, 0.5, rng, true));
  m.tgt_embed_ = round_to_float(Tensor::randn({config.vocab_size, d}, 0.5, rng, true));
  m.pos_embed_ = round_to_float(Tensor::randn({config.max_positions, d}, 0.5, rng, true));
  for (std::size_t i = 0; i < config.encoder_layers; ++i) {
    EncoderLayer l;
    l.id = {Pool::kEncoder, static_cast<int>(i)};
    l.ln1 = make_norm(d);
    l.ln2 = make_norm(d);
    l.self_attn = make_attention(d, residual_std, rng);
    l.ffn = make_ffn(d, config.d_ff, residual_std, rng);
    m.encoder_.push_back(std::move(l));
  }
  for (std::size_t i = 0; i < config.decoder_layers; ++i) {
    DecoderLayer l;
    l.id = {Pool::kDecoder, static_cast<int>(i)};
    l.ln1 = make_norm(d);
    l.ln2 = make_norm(d);
    l.ln3 = make_norm(d);
    l.self_attn = make_attention(d, residual_std, rng);
    l.cross_attn = make_attention(d, residual_std, rng);
    l.ffn = make_ffn(d, config.d_ff, residual_std, rng);
    m.decoder_.push_back(std::move(l));
  }
  m.encoder_norm_ = make_norm(d);
  m.decoder_norm_ = make_norm(d);
  m.out_proj_ = make_linear(d, config.vocab_size, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  return m;
}

TransformerModel TransformerModel::skeleton(const ModelConfig& config, const std::vector<int>& encoder_ids,
                                            const std::vector<int>& decoder_ids) {
  Rng rng(0);
  TransformerModel m = build(config, rng);
  auto keep = [](const std::vector<int>& ids, int idx) { return std::find(ids.begin(), ids.end(), idx) != ids.end(); };
  for (int id : encoder_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config.encoder_layers) {
      fail(ErrorKind::kFormat, "encoder layer id " + std::to_string(id) + " outside the configured depth");
    }
  }
  for (int id : decoder_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config.decoder_layers) {
      fail(ErrorKind::kFormat, "decoder layer id " + std::to_string(id) + " outside the configured depth");
    }
  }
  if (encoder_ids.empty() || decoder_ids.empty()) fail(ErrorKind::kFormat, "a layer stack is empty");
  std::erase_if(m.encoder_, [&](const EncoderLayer& l) { return !keep(encoder_ids, l.id.original_index); });
  std::erase_if(m.decoder_, [&](const DecoderLayer& l) { return !keep(decoder_ids, l.id.original_index); });
  return m;
}

TransformerModel TransformerModel::clone() const {
  TransformerModel c;
  c.config_ = config_;
  c.src_embed_ = src_embed_.clone();
  c.tgt_embed_ = tgt_embed_.clone();
  c.pos_embed_ = pos_embed_.clone();
  for (const auto& l : encoder_) {
    c.encoder_.push_back({l.id, clone_norm(l.ln1), clone_norm(l.ln2), clone_attention(l.self_attn), clone_ffn(l.ffn)});
  }
  for (const auto& l : decoder_) {
    c.decoder_.push_back({l.id, clone_norm(l.ln1), clone_norm(l.ln2), clone_norm(l.ln3), clone_attention(l.self_attn),
                          clone_attention(l.cross_attn), clone_ffn(l.ffn)});
  }
  c.encoder_norm_ = clone_norm(encoder_norm_);
  c.decoder_norm_ = clone_norm(decoder_norm_);
  c.out_proj_ = clone_linear(out_proj_);
  return c;
}

std::vector<LayerId> TransformerModel::layer_ids(Pool pool) const {
  std::vector<LayerId> ids;
  if (pool == Pool::kEncoder) {
    for (const auto& l : encoder_) ids.push_back(l.id);
  } else {
    for (const auto& l : decoder_) ids.push_back(l.id);
  }
  return ids;
}

bool TransformerModel::has_layer(const LayerId& id) const {
  const auto ids = layer_ids(id.pool);
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

// ---- forward ---------------------------------------------------------------

Tensor TransformerModel::embed(const Tensor& table, std::span<const int> ids, Rng* dropout_rng) const {
  if (ids.empty()) fail(ErrorKind::kArgument, "empty token sequence");
  if (ids.size() > config_.max_positions) {
    fail(ErrorKind::kSequenceLength, "sequence of length " + std::to_string(ids.size()) + " exceeds max_positions " +
                                         std::to_string(config_.max_positions));
  }
  for (int t : ids) {
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) {
      fail(ErrorKind::kArgument, "token id " + std::to_string(t) + " outside vocabulary of size " +
                                     std::to_string(config_.vocab_size));
    }
  }
  std::vector<int> pos(ids.size());
  std::iota(pos.begin(), pos.end(), 0);
  return residual_dropout(add(embedding(table, ids), embedding(pos_embed_, pos)), config_.dropout, dropout_rng);
}

Tensor TransformerModel::encode(std::span<const int> source, Rng* rng) const {
  Tensor x = embed(src_embed_, source, rng);
  const std::size_t heads = config_.n_heads;
  const double p = config_.dropout;
  for (const auto& l : encoder_) {
    const Tensor h = norm_apply(l.ln1, x);
    x = add(x, residual_dropout(attend(l.self_attn, h, h, heads, false, rng), p, rng));
    x = add(x, residual_dropout(feed_forward(l.ffn, norm_apply(l.ln2, x), rng), p, rng));
  }
  return norm_apply(encoder_norm_, x);
}

Tensor TransformerModel::decode(const Tensor& memory, std::span<const int> prefix, Rng* rng) const {
  Tensor y = embed(tgt_embed_, prefix, rng);
  const std::size_t heads = config_.n_heads;
  const double p = config_.dropout;
  for (const auto& l : decoder_) {
    const Tensor h = norm_apply(l.ln1, y);
    y = add(y, residual_dropout(attend(l.self_attn, h, h, heads, true, rng), p, rng));
    y = add(y, residual_dropout(attend(l.cross_attn, norm_apply(l.ln2, y), memory, heads, false, rng), p, rng));
    y = add(y, residual_dropout(feed_forward(l.ffn, norm_apply(l.ln3, y), rng), p, rng));
  }
  return out_proj_.forward(norm_apply(decoder_norm_, y), rng);
}

Tensor TransformerModel::forward(std::span<const int> source, std::span<const int> prefix, Rng* rng) const {
  return decode(encode(source, rng), prefix, rng);
}

std::vector<int> TransformerModel::greedy_decode(std::span<const int> source, std::size_t max_len) const {
  if (max_len < 1) fail(ErrorKind::kArgument, "greedy_decode: max_len must be >= 1");
  NoGradGuard no_grad;
  const Tensor memory = encode(source);
  const std::size_t limit = std::min(max_len, config_.max_positions);
  std::vector<int> prefix{kBos};
  std::vector<int> out;
  while (out.size() < limit) {
    const Tensor logits = decode(memory, prefix);
    const std::size_t v = logits.cols();
    const double* last = logits.data().data() + (logits.rows() - 1) * v;
    // max_element returns the first maximum, i.e. the lowest id on ties.
    const int next = static_cast<int>(std::max_element(last, last + v) - last);
    out.push_back(next);
    if (next == kEos) break;
    prefix.push_back(next);
  }
  return out;
}

// ---- structure -------------------------------------------------------------

void TransformerModel::remove_layer(const LayerId& id) {
  auto drop = [&](auto& stack) {
    auto it = std::find_if(stack.begin(), stack.end(), [&](const auto& l) { return l.id == id; });
    if (it == stack.end()) fail(ErrorKind::kNotFound, "layer " + id.str() + " is not present");
    if (stack.size() <= 1) fail(ErrorKind::kRefused, "refusing to remove " + id.str() + ": it is the last layer of its stack");
    stack.erase(it);
  };
  if (id.pool == Pool::kEncoder) {
    drop(encoder_);
  } else {
    drop(decoder_);
  }
}

void TransformerModel::mutate_linears(const LinearVisitor& fn) {
  visit_linears(*this, fn);
  fn("out_proj", out_proj_);
}

void TransformerModel::for_each_linear(const ConstLinearVisitor& fn) const {
  visit_linears(*this, fn);
  fn("out_proj", out_proj_);
}

namespace {

template <class Layer, class Fn>
void visit_layer_tensors(const std::string& p, Layer& l, const Fn& fn) {
  auto norm = [&](const std::string& n, auto& x) {
    fn(p + "." + n + ".gain", x.gain);
    fn(p + "." + n + ".bias", x.bias);
  };
  auto lin = [&](const std::string& n, auto& x) {
    if (!x.quantized) fn(p + "." + n + ".weight", x.weight);
    fn(p + "." + n + ".bias", x.bias);
  };
  auto attn = [&](const std::string& n, auto& a) {
    lin(n + ".q", a.q);
    lin(n + ".k", a.k);
    lin(n + ".v", a.v);
    lin(n + ".o", a.o);
  };
  norm("ln1", l.ln1);
  norm("ln2", l.ln2);
  if constexpr (requires { l.ln3; }) norm("ln3", l.ln3);
  attn("self_attn", l.self_attn);
  if constexpr (requires { l.cross_attn; }) attn("cross_attn", l.cross_attn);
  lin("ffn.in", l.ffn.in);
  lin("ffn.out", l.ffn.out);
}

}  // namespace

void TransformerModel::mutate_tensors(const TensorVisitor& fn) {
  fn("src_embed", src_embed_);
  fn("tgt_embed", tgt_embed_);
  fn("pos_embed", pos_embed_);
  for (auto& l : encoder_) visit_layer_tensors("encoder." + std::to_string(l.id.original_index), l, fn);
  for (auto& l : decoder_) visit_layer_tensors("decoder." + std::to_string(l.id.original_index), l, fn);
  fn("encoder_norm.gain", encoder_norm_.gain);
  fn("encoder_norm.bias", encoder_norm_.bias);
  fn("decoder_norm.gain", decoder_norm_.gain);
  fn("decoder_norm.bias", decoder_norm_.bias);
  if (!out_proj_.quantized) fn("out_proj.weight", out_proj_.weight);
  fn("out_proj.bias", out_proj_.bias);
}

void TransformerModel::for_each_tensor(const ConstTensorVisitor& fn) const {
  const_cast<TransformerModel*>(this)->mutate_tensors(
      TensorVisitor([&](const std::string& n, Tensor& t) { fn(n, t); }));
}

std::size_t TransformerModel::param_count() const {
  std::size_t n = 0;
  for_each_tensor(ConstTensorVisitor([&](const std::string&, const Tensor& t) { n += t.numel(); }));
  for_each_linear(ConstLinearVisitor([&](const std::string&, const Linear& l) {
    if (l.quantized) n += l.quantized->numel();
  }));
  return n;
}

std::size_t TransformerModel::adapter_param_count() const {
  std::size_t n = 0;
  for_each_linear(ConstLinearVisitor([&](const std::string&, const Linear& l) {
    if (l.adapter) n += l.adapter->param_count();
  }));
  return n;
}

std::size_t TransformerModel::pool_param_count(Pool pool) const {
  const std::string prefix = std::string(pool_name(pool)) + ".";
  std::size_t n = 0;
  for_each_tensor(ConstTensorVisitor([&](const std::string& name, const Tensor& t) {
    if (name.starts_with(prefix)) n += t.numel();
  }));
  for_each_linear(ConstLinearVisitor([&](const std::string& name, const Linear& l) {
    if (l.quantized && name.starts_with(prefix)) n += l.quantized->numel();
  }));
  return n;
}

std::vector<NamedTensor> TransformerModel::trainable_parameters() {
  std::vector<NamedTensor> out;
  mutate_tensors(TensorVisitor([&](const std::string& n, Tensor& t) {
    if (t.requires_grad()) out.push_back({n, t});
  }));
  mutate_linears(LinearVisitor([&](const std::string& n, Linear& l) {
    if (!l.adapter) return;
    if (l.adapter->down.requires_grad()) out.push_back({n + ".lora_down", l.adapter->down});
    if (l.adapter->up.requires_grad()) out.push_back({n + ".lora_up", l.adapter->up});
  }));
  return out;
}

std::size_t TransformerModel::trainable_param_count() const {
  std::size_t n = 0;
  for (const auto& p : const_cast<TransformerModel*>(this)->trainable_parameters()) n += p.tensor.numel();
  return n;
}

void TransformerModel::set_base_trainable(bool on) {
  mutate_tensors(TensorVisitor([&](const std::string&, Tensor& t) { t.set_requires_grad(on); }));
}

bool TransformerModel::has_adapters() const {
  bool any = false;
  for_each_linear(ConstLinearVisitor([&](const std::string&, const Linear& l) { any = any || l.adapter.has_value(); }));
  return any;
}

bool TransformerModel::any_quantized() const {
  bool any = false;
  for_each_linear(ConstLinearVisitor([&](const std::string&, const Linear& l) { any = any || l.quantized.has_value(); }));
  return any;
}

}  // namespace prunekit::model
