// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "quant/nf4.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace prunekit::quant {

namespace {

// Quantile offset that places the outermost levels halfway between the
// 1/(2*15) and 1/(2*16) tail probabilities.
constexpr double kQuantileOffset = 0.9677083;

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return v;
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::kArgument, "normal_quantile: p must be in (0,1)");
  // Acklam's rational approximation as a starting point.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double lo = 0.02425;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - lo) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  // Halley refinement against the erfc-based CDF.
  for (int it = 0; it < 3; ++it) {
    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
    x = x - u / (1 + x * u / 2);
  }
  return x;
}

Nf4Codebook build_nf4_codebook() {
  std::vector<double> v;
  auto pos = linspace(kQuantileOffset, 0.5, 9);
  pos.pop_back();
  for (double p : pos) v.push_back(normal_quantile(p));
  auto neg = linspace(kQuantileOffset, 0.5, 8);
  neg.pop_back();
  for (double p : neg) v.push_back(-normal_quantile(p));
  v.push_back(0.0);
  std::sort(v.begin(), v.end());
  const double mx = v.back();
  Nf4Codebook cb;
  for (std::size_t i = 0; i < 16; ++i) cb.levels[i] = v[i] / mx;
  cb.levels[0] = -1.0;
  cb.levels[7] = 0.0;
  cb.levels[15] = 1.0;
  for (std::size_t i = 0; i < 15; ++i) cb.midpoints[i] = 0.5 * (cb.levels[i] + cb.levels[i + 1]);
  return cb;
}

const Nf4Codebook& nf4_codebook() {
  static const Nf4Codebook cb = build_nf4_codebook();
  return cb;
}

std::uint8_t Nf4Codebook::encode(double normalized) const {
  // First threshold the value does not exceed; ties stay on the lower code.
  const auto it = std::lower_bound(midpoints.begin(), midpoints.end(), normalized);
  return static_cast<std::uint8_t>(it - midpoints.begin());
}

double Nf4Codebook::max_half_gap() const {
  double g = 0;
  for (std::size_t i = 0; i < 15; ++i) g = std::max(g, 0.5 * (levels[i + 1] - levels[i]));
  return g;
}

double DoubleQuantMeta::absmax(std::size_t block) const {
  const double v = static_cast<double>(codes[block]) * static_cast<double>(scales[block / group_size]) +
                   static_cast<double>(offset);
  return std::max(0.0, v);
}

std::uint8_t QuantizedTensor::code(std::size_t i) const {
  const std::uint8_t byte = packed[i / 2];
  return (i % 2 == 0) ? (byte & 0x0F) : (byte >> 4);
}

double QuantizedTensor::block_absmax(std::size_t block) const {
  return dq ? dq->absmax(block) : static_cast<double>(absmax[block]);
}

void QuantizedTensor::validate() const {
  const std::size_t n = numel();
  if (block_size == 0) fail(ErrorKind::kFormat, "nf4: block size is zero");
  if (packed.size() != (n + 1) / 2) {
    fail(ErrorKind::kFormat, "nf4: nibble payload has " + std::to_string(packed.size()) + " bytes, expected " +
                                 std::to_string((n + 1) / 2));
  }
  const std::size_t blocks = num_blocks();
  if (dq) {
    if (!absmax.empty()) fail(ErrorKind::kFormat, "nf4: both single and double quant scales present");
    if (dq->group_size == 0) fail(ErrorKind::kFormat, "nf4: double-quant group size is zero");
    if (dq->codes.size() != blocks) fail(ErrorKind::kFormat, "nf4: double-quant code count mismatch");
    if (dq->scales.size() != (blocks + dq->group_size - 1) / dq->group_size) {
      fail(ErrorKind::kFormat, "nf4: double-quant group scale count mismatch");
    }
  } else if (absmax.size() != blocks) {
    fail(ErrorKind::kFormat, "nf4: expected " + std::to_string(blocks) + " block scales, got " +
                                 std::to_string(absmax.size()));
  }
}

std::size_t QuantizedTensor::payload_bytes() const {
  std::size_t bytes = packed.size();
  if (dq) {
    bytes += dq->codes.size() + 4 * dq->scales.size() + 4;
  } else {
    bytes += 4 * absmax.size();
  }
  return bytes;
}

bool operator==(const DoubleQuantMeta& a, const DoubleQuantMeta& b) {
  return a.group_size == b.group_size && a.offset == b.offset && a.codes == b.codes && a.scales == b.scales;
}

bool operator==(const QuantizedTensor& a, const QuantizedTensor& b) {
  return a.shape == b.shape && a.block_size == b.block_size && a.packed == b.packed && a.absmax == b.absmax &&
         a.dq == b.dq;
}

QuantizedTensor quantize_nf4(const numerics::Tensor& t, std::size_t block_size, bool double_quant,
                             std::size_t dq_group) {
  if (block_size == 0) fail(ErrorKind::kArgument, "quantize_nf4: block size must be positive");
  if (double_quant && dq_group == 0) fail(ErrorKind::kArgument, "quantize_nf4: double-quant group must be positive");
  auto x = t.data();
  for (double v : x) {
    if (!std::isfinite(v)) fail(ErrorKind::kNumeric, "quantize_nf4: non-finite input");
  }
  const auto& cb = nf4_codebook();
  QuantizedTensor q;
  q.shape = t.shape();
  q.block_size = block_size;
  const std::size_t n = x.size();
  const std::size_t blocks = q.num_blocks();
  q.packed.assign((n + 1) / 2, 0);
  std::vector<float> absmax(blocks, 0.0f);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t lo = b * block_size, hi = std::min(n, lo + block_size);
    double mx = 0;
    for (std::size_t i = lo; i < hi; ++i) mx = std::max(mx, std::abs(x[i]));
    absmax[b] = static_cast<float>(mx);
    const double scale = static_cast<double>(absmax[b]);
    for (std::size_t i = lo; i < hi; ++i) {
      const std::uint8_t c = scale == 0.0 ? kZeroCode : cb.encode(std::clamp(x[i] / scale, -1.0, 1.0));
      q.packed[i / 2] |= (i % 2 == 0) ? c : static_cast<std::uint8_t>(c << 4);
    }
  }
  if (!double_quant) {
    q.absmax = std::move(absmax);
    return q;
  }
  DoubleQuantMeta meta;
  meta.group_size = dq_group;
  double mean = 0;
  for (float a : absmax) mean += a;
  meta.offset = static_cast<float>(mean / static_cast<double>(blocks));
  const std::size_t groups = (blocks + dq_group - 1) / dq_group;
  meta.codes.assign(blocks, 0);
  meta.scales.assign(groups, 0.0f);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t lo = g * dq_group, hi = std::min(blocks, lo + dq_group);
    double mx = 0;
    for (std::size_t b = lo; b < hi; ++b) mx = std::max(mx, std::abs(double(absmax[b]) - double(meta.offset)));
    meta.scales[g] = static_cast<float>(mx / 127.0);
    const double s = static_cast<double>(meta.scales[g]);
    for (std::size_t b = lo; b < hi; ++b) {
      const double c = s == 0.0 ? 0.0 : std::round((double(absmax[b]) - double(meta.offset)) / s);
      meta.codes[b] = static_cast<std::int8_t>(std::clamp(c, -127.0, 127.0));
    }
  }
  q.dq = std::move(meta);
  return q;
}

numerics::Tensor dequantize(const QuantizedTensor& q) {
  q.validate();
  const auto& cb = nf4_codebook();
  const std::size_t n = q.numel();
  std::vector<double> out(n);
  for (std::size_t b = 0; b < q.num_blocks(); ++b) {
    const double scale = q.block_absmax(b);
    const std::size_t lo = b * q.block_size, hi = std::min(n, lo + q.block_size);
    for (std::size_t i = lo; i < hi; ++i) out[i] = cb.levels[q.code(i)] * scale;
  }
  return numerics::Tensor::from(q.shape, std::move(out));
}

double scale_overhead_bits_per_param(std::size_t block_size, bool double_quant, std::size_t dq_group) {
  const double bs = static_cast<double>(block_size);
  if (!double_quant) return 32.0 / bs;
  return 8.0 / bs + 32.0 / (bs * static_cast<double>(dq_group));
}

}  // namespace prunekit::quant
