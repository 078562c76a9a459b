// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"

namespace prunekit::numerics {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized lazily, only for nodes that require grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;

  std::vector<double>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Reference-counted handle to a dense row-major array of doubles with an
// optional gradient. Copying a Tensor copies the handle; use clone() for a
// deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor randn(Shape shape, double stddev, Rng& rng, bool requires_grad = false);
  static Tensor scalar(double v) { return from({1}, {v}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  double item() const { return node_->data.at(0); }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on);
  // Empty span when the tensor does not track gradients or none has been
  // accumulated yet.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  bool has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }
  void zero_grad();

  // Reverse-mode sweep from a single-element tensor. Gradients accumulate into
  // every reachable leaf that requires grad.
  void backward();

  Tensor clone() const;
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  friend Tensor make_result(Shape, std::vector<double>, std::initializer_list<Tensor>);
  std::shared_ptr<detail::Node> node_;
};

// Disables graph construction on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Dense kernels on raw row-major buffers. C is m x n.
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate);

// ---- differentiable ops --------------------------------------------------

// [m x k] x [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m x k] x [n x k]^T, the layout used by linear layers (weight is out x in).
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Adds a length-n vector to every row of an [m x n] matrix.
Tensor add_row(const Tensor& a, const Tensor& bias);
Tensor scale(const Tensor& a, double s);
Tensor gelu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// axis 0 normalizes columns, axis 1 (or -1) normalizes rows.
Tensor softmax(const Tensor& x, int axis = -1);
// Row-wise normalization followed by an elementwise affine map.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// Mean negative log-likelihood of targets under row-wise softmax(logits).
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);
// Gathers rows of a [V x d] table.
Tensor embedding(const Tensor& table, std::span<const int> ids);
// Multi-head scaled dot-product attention over already-projected q, k, v.
// q is [Tq x d], k and v are [Tk x d]; heads split d evenly.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, bool causal);
// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& a, double p, Rng& rng);

}  // namespace prunekit::numerics
