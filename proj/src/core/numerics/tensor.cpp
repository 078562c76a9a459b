// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace prunekit::numerics {

using detail::Node;

namespace {

thread_local bool g_grad_enabled = true;

void check_finite(std::span<const double> v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) fail(ErrorKind::kNumeric, std::string(op) + ": non-finite input");
  }
}

void require_2d(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) {
    fail(ErrorKind::kDimension, std::string(op) + ": expected a 2-d tensor, got " + shape_str(t.shape()));
  }
}

// Accumulates into a parent's gradient only when that parent is tracked.
std::vector<double>* grad_of(Node* n) { return n->requires_grad ? &n->grad_buffer() : nullptr; }

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---- construction --------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) fail(ErrorKind::kDimension, "tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    fail(ErrorKind::kDimension, "shape " + shape_str(shape) + " does not match " +
                                    std::to_string(values.size()) + " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::randn(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.normal() * stddev;
  return from(std::move(shape), std::move(v), requires_grad);
}

void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  if (!node_) return {};
  auto n = std::make_shared<Node>();
  n->shape = node_->shape;
  n->data = node_->data;
  n->requires_grad = node_->requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::detach() const {
  Tensor t = clone();
  t.node_->requires_grad = false;
  return t;
}

Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) n->requires_grad = true;
    }
    if (n->requires_grad) {
      for (const Tensor& t : inputs) n->parents.push_back(t.shared());
    }
  }
  return Tensor(std::move(n));
}

void Tensor::backward() {
  if (numel() != 1) fail(ErrorKind::kDimension, "backward() needs a single-element tensor, got " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior gradients are scratch space for this sweep.
  for (Node* n : order) {
    if (!n->parents.empty()) n->grad.assign(n->data.size(), 0.0);
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward();
  }
}

// ---- kernels ---------------------------------------------------------------

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        s0 += ai[p] * bj[p];
        s1 += ai[p + 1] * bj[p + 1];
        s2 += ai[p + 2] * bj[p + 2];
        s3 += ai[p + 3] * bj[p + 3];
      }
      for (; p < k; ++p) s0 += ai[p] * bj[p];
      const double s = (s0 + s1) + (s2 + s3);
      ci[j] = accumulate ? ci[j] + s : s;
    }
  }
}

// C[k x n] (+)= A^T B with A [m x k], B [m x n].
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + k * n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const double* ar = a + r * k;
    const double* br = b + r * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * br[j];
    }
  }
}

// ---- ops -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    fail(ErrorKind::kDimension, "matmul: inner extents differ for " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data(), false);
  Tensor r = make_result({m, n}, std::move(out), {a, b});
  if (r.requires_grad()) {
    Node *rn = r.node(), *an = a.node(), *bn = b.node();
    rn->backward = [rn, an, bn, m, k, n] {
      if (auto* ga = grad_of(an)) gemm_nt(m, n, k, rn->grad.data(), bn->data.data(), ga->data(), true);
      if (auto* gb = grad_of(bn)) gemm_tn(m, k, n, an->data.data(), rn->grad.data(), gb->data(), true);
    };
  }
  return r;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    fail(ErrorKind::kDimension,
         "matmul_nt: inner extents differ for " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  std::vector<double> out(m * n);
  gemm_nt(m, k, n, a.data().data(), b.data().data(), out.data(), false);
  Tensor r = make_result({m, n}, std::move(out), {a, b});
  if (r.requires_grad()) {
    Node *rn = r.node(), *an = a.node(), *bn = b.node();
    rn->backward = [rn, an, bn, m, k, n] {
      // dA = dY B, dB = dY^T A
      if (auto* ga = grad_of(an)) gemm_nn(m, n, k, rn->grad.data(), bn->data.data(), ga->data(), true);
      if (auto* gb = grad_of(bn)) gemm_tn(m, n, k, rn->grad.data(), an->data.data(), gb->data(), true);
    };
  }
  return r;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::kDimension, "add: shapes differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  Tensor r = make_result(a.shape(), std::move(out), {a, b});
  if (r.requires_grad()) {
    Node *rn = r.node(), *an = a.node(), *bn = b.node();
    rn->backward = [rn, an, bn] {
      for (Node* p : {an, bn}) {
        if (auto* g = grad_of(p)) {
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += rn->grad[i];
        }
      }
    };
  }
  return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::kDimension, "mul: shapes differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  Tensor r = make_result(a.shape(), std::move(out), {a, b});
  if (r.requires_grad()) {
    Node *rn = r.node(), *an = a.node(), *bn = b.node();
    rn->backward = [rn, an, bn] {
      if (auto* g = grad_of(an)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += rn->grad[i] * bn->data[i];
      }
      if (auto* g = grad_of(bn)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += rn->grad[i] * an->data[i];
      }
    };
  }
  return r;
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  require_2d(a, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.numel() != n) {
    fail(ErrorKind::kDimension, "add_row: bias " + shape_str(bias.shape()) + " does not fit " + shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = bias.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bd[j];
  }
  Tensor r = make_result(a.shape(), std::move(out), {a, bias});
  if (r.requires_grad()) {
    Node *rn = r.node(), *an = a.node(), *bn = bias.node();
    rn->backward = [rn, an, bn, m, n] {
      if (auto* g = grad_of(an)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += rn->grad[i];
      }
      if (auto* g = grad_of(bn)) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) (*g)[j] += rn->grad[i * n + j];
        }
      }
    };
  }
  return r;
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& x : out) x *= s;
  Tensor r = make_result(a.shape(), std::move(out), {a});
  if (r.requires_grad()) {
    Node *rn = r.node(), *an = a.node();
    rn->backward = [rn, an, s] {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * rn->grad[i];
    };
  }
  return r;
}

Tensor gelu(const Tensor& a) {
  // tanh approximation
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  std::vector<double> out(a.numel());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = ad[i];
    out[i] = 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x)));
  }
  Tensor r = make_result(a.shape(), std::move(out), {a});
  if (r.requires_grad()) {
    Node *rn = r.node(), *an = a.node();
    rn->backward = [rn, an] {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = an->data[i];
        const double u = kC * (x + kA * x * x * x);
        const double t = std::tanh(u);
        const double du = kC * (1.0 + 3.0 * kA * x * x);
        g[i] += rn->grad[i] * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
      }
    };
  }
  return r;
}

Tensor sum(const Tensor& a) {
  double s = 0;
  for (double x : a.data()) s += x;
  Tensor r = make_result({1}, {s}, {a});
  if (r.requires_grad()) {
    Node *rn = r.node(), *an = a.node();
    rn->backward = [rn, an] {
      auto& g = an->grad_buffer();
      for (double& x : g) x += rn->grad[0];
    };
  }
  return r;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor softmax(const Tensor& x, int axis) {
  require_2d(x, "softmax");
  if (axis != 0 && axis != 1 && axis != -1) fail(ErrorKind::kArgument, "softmax: axis must be 0, 1 or -1");
  check_finite(x.data(), "softmax");
  const std::size_t m = x.rows(), n = x.cols();
  const bool by_rows = axis != 0;
  // Views the matrix as `outer` independent vectors of length `len` with `stride`.
  const std::size_t outer = by_rows ? m : n, len = by_rows ? n : m;
  const std::size_t stride = by_rows ? 1 : n, step = by_rows ? n : 1;
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * step;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, xd[base + i * stride]);
    double z = 0;
    for (std::size_t i = 0; i < len; ++i) z += (out[base + i * stride] = std::exp(xd[base + i * stride] - mx));
    for (std::size_t i = 0; i < len; ++i) out[base + i * stride] /= z;
  }
  Tensor r = make_result(x.shape(), std::move(out), {x});
  if (r.requires_grad()) {
    Node *rn = r.node(), *xn = x.node();
    rn->backward = [rn, xn, outer, len, stride, step] {
      auto& g = xn->grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t base = o * step;
        double dot = 0;
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t at = base + i * stride;
          dot += rn->grad[at] * rn->data[at];
        }
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t at = base + i * stride;
          g[at] += rn->data[at] * (rn->grad[at] - dot);
        }
      }
    };
  }
  return r;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_2d(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.numel() != n || bias.numel() != n) {
    fail(ErrorKind::kDimension, "layer_norm: affine parameters do not match width " + std::to_string(n));
  }
  check_finite(x.data(), "layer_norm");
  auto xd = x.data();
  auto gd = gain.data(), bd = bias.data();
  std::vector<double> out(m * n), xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xd.data() + i * n;
    double mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gd[j] + bd[j];
    }
  }
  Tensor r = make_result(x.shape(), std::move(out), {x, gain, bias});
  if (r.requires_grad()) {
    Node *rn = r.node(), *xn = x.node(), *gn = gain.node(), *bn = bias.node();
    rn->backward = [rn, xn, gn, bn, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
      const auto& dy = rn->grad;
      if (auto* gg = grad_of(gn)) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) (*gg)[j] += dy[i * n + j] * xhat[i * n + j];
        }
      }
      if (auto* gb = grad_of(bn)) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) (*gb)[j] += dy[i * n + j];
        }
      }
      if (auto* gx = grad_of(xn)) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < m; ++i) {
          double s1 = 0, s2 = 0;
          for (std::size_t j = 0; j < n; ++j) {
            const double dxh = dy[i * n + j] * gn->data[j];
            s1 += dxh;
            s2 += dxh * xhat[i * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const double dxh = dy[i * n + j] * gn->data[j];
            (*gx)[i * n + j] += inv_std[i] * (dxh - inv_n * s1 - xhat[i * n + j] * inv_n * s2);
          }
        }
      }
    };
  }
  return r;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require_2d(logits, "cross_entropy");
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m) {
    fail(ErrorKind::kDimension, "cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                                    std::to_string(m) + " rows");
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= n) {
      fail(ErrorKind::kArgument, "cross_entropy: target " + std::to_string(t) + " outside [0," + std::to_string(n) + ")");
    }
  }
  check_finite(logits.data(), "cross_entropy");
  auto ld = logits.data();
  std::vector<double> probs(m * n);
  double loss = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = ld.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0;
    for (std::size_t j = 0; j < n; ++j) z += (probs[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] /= z;
    loss -= row[targets[i]] - mx - std::log(z);
  }
  loss /= static_cast<double>(m);
  Tensor r = make_result({1}, {loss}, {logits});
  if (r.requires_grad()) {
    Node *rn = r.node(), *ln = logits.node();
    std::vector<int> tg(targets.begin(), targets.end());
    rn->backward = [rn, ln, m, n, probs = std::move(probs), tg = std::move(tg)] {
      auto& g = ln->grad_buffer();
      const double s = rn->grad[0] / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += s * probs[i * n + j];
        g[i * n + tg[i]] -= s;
      }
    };
  }
  return r;
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_2d(table, "embedding");
  const std::size_t v = table.rows(), d = table.cols();
  if (ids.empty()) fail(ErrorKind::kArgument, "embedding: empty id list");
  std::vector<double> out(ids.size() * d);
  auto td = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      fail(ErrorKind::kArgument, "embedding: id " + std::to_string(ids[i]) + " outside [0," + std::to_string(v) + ")");
    }
    std::copy_n(td.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  Tensor r = make_result({ids.size(), d}, std::move(out), {table});
  if (r.requires_grad()) {
    Node *rn = r.node(), *tn = table.node();
    std::vector<int> idv(ids.begin(), ids.end());
    rn->backward = [rn, tn, d, idv = std::move(idv)] {
      auto& g = tn->grad_buffer();
      for (std::size_t i = 0; i < idv.size(); ++i) {
        double* gr = g.data() + static_cast<std::size_t>(idv[i]) * d;
        for (std::size_t j = 0; j < d; ++j) gr[j] += rn->grad[i * d + j];
      }
    };
  }
  return r;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, bool causal) {
  require_2d(q, "attention");
  require_2d(k, "attention");
  require_2d(v, "attention");
  const std::size_t tq = q.rows(), tk = k.rows(), d = q.cols();
  if (k.cols() != d || v.cols() != d || v.rows() != tk) {
    fail(ErrorKind::kDimension, "attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                                    shape_str(v.shape()) + " are inconsistent");
  }
  if (heads == 0 || d % heads != 0) fail(ErrorKind::kDimension, "attention: width not divisible by head count");
  const std::size_t dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  auto qd = q.data(), kd = k.data(), vd = v.data();

  // probs[h][i][j], kept for the backward pass.
  std::vector<double> probs(heads * tq * tk, 0.0);
  std::vector<double> out(tq * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < tq; ++i) {
      double* p = probs.data() + (h * tq + i) * tk;
      const std::size_t limit = causal ? std::min(tk, i + 1) : tk;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < limit; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < dh; ++c) s += qd[i * d + off + c] * kd[j * d + off + c];
        p[j] = s * inv;
        mx = std::max(mx, p[j]);
      }
      double z = 0;
      for (std::size_t j = 0; j < limit; ++j) z += (p[j] = std::exp(p[j] - mx));
      double* o = out.data() + i * d + off;
      for (std::size_t j = 0; j < limit; ++j) {
        p[j] /= z;
        const double* vj = vd.data() + j * d + off;
        for (std::size_t c = 0; c < dh; ++c) o[c] += p[j] * vj[c];
      }
    }
  }
  Tensor r = make_result({tq, d}, std::move(out), {q, k, v});
  if (r.requires_grad()) {
    Node *rn = r.node(), *qn = q.node(), *kn = k.node(), *vn = v.node();
    rn->backward = [rn, qn, kn, vn, heads, tq, tk, d, dh, inv, causal, probs = std::move(probs)] {
      auto* gq = grad_of(qn);
      auto* gk = grad_of(kn);
      auto* gv = grad_of(vn);
      std::vector<double> dp(tk);
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < tq; ++i) {
          const double* p = probs.data() + (h * tq + i) * tk;
          const double* dout = rn->grad.data() + i * d + off;
          const std::size_t limit = causal ? std::min(tk, i + 1) : tk;
          double dot = 0;
          for (std::size_t j = 0; j < limit; ++j) {
            const double* vj = vn->data.data() + j * d + off;
            double s = 0;
            for (std::size_t c = 0; c < dh; ++c) s += dout[c] * vj[c];
            dp[j] = s;
            dot += s * p[j];
            if (gv) {
              double* gvj = gv->data() + j * d + off;
              for (std::size_t c = 0; c < dh; ++c) gvj[c] += p[j] * dout[c];
            }
          }
          for (std::size_t j = 0; j < limit; ++j) {
            const double ds = p[j] * (dp[j] - dot) * inv;
            if (ds == 0.0) continue;
            if (gq) {
              double* gqi = gq->data() + i * d + off;
              const double* kj = kn->data.data() + j * d + off;
              for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
            }
            if (gk) {
              double* gkj = gk->data() + j * d + off;
              const double* qi = qn->data.data() + i * d + off;
              for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
            }
          }
        }
      }
    };
  }
  return r;
}

Tensor dropout(const Tensor& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) fail(ErrorKind::kArgument, "dropout: rate must be in [0,1)");
  const double keep = 1.0 - p;
  std::vector<double> mask(a.numel());
  for (double& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  std::vector<double> out(a.numel());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * mask[i];
  Tensor r = make_result(a.shape(), std::move(out), {a});
  if (r.requires_grad()) {
    Node *rn = r.node(), *an = a.node();
    rn->backward = [rn, an, mask = std::move(mask)] {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += rn->grad[i] * mask[i];
    };
  }
  return r;
}

}  // namespace prunekit::numerics
