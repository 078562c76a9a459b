// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "numerics/tensor.hpp"

namespace prunekit::quant {

inline constexpr std::size_t kDefaultBlockSize = 64;
inline constexpr std::size_t kDefaultDoubleQuantGroup = 256;
inline constexpr std::uint8_t kZeroCode = 7;

// 16 ascending levels in [-1, 1] built from standard-normal quantiles:
// 8 positive and 7 negative levels plus an exact zero, normalized by the
// largest magnitude so the endpoints are exactly -1 and 1.
struct Nf4Codebook {
  std::array<double, 16> levels{};
  // Decision thresholds between adjacent levels.
  std::array<double, 15> midpoints{};

  // Nearest level; an exact midpoint resolves to the lower code.
  std::uint8_t encode(double normalized) const;
  // Largest distance from any point in [-1, 1] to its nearest level.
  double max_half_gap() const;
};

// Inverse of the standard normal CDF, accurate to double precision.
double normal_quantile(double p);

Nf4Codebook build_nf4_codebook();
const Nf4Codebook& nf4_codebook();

// Second-level quantization of the per-block absmax values: a tensor-wide
// offset (their mean) and, per group of blocks, a float scale for signed
// 8-bit codes of the centered absmax.
struct DoubleQuantMeta {
  std::size_t group_size = kDefaultDoubleQuantGroup;
  float offset = 0.0f;
  std::vector<std::int8_t> codes;  // one per block
  std::vector<float> scales;       // one per group

  double absmax(std::size_t block) const;
};

struct QuantizedTensor {
  numerics::Shape shape;
  std::size_t block_size = kDefaultBlockSize;
  std::vector<std::uint8_t> packed;    // two codes per byte, low nibble first
  std::vector<float> absmax;           // single-level scales (empty under double quant)
  std::optional<DoubleQuantMeta> dq;   // present under double quant

  std::size_t numel() const { return numerics::shape_numel(shape); }
  std::size_t num_blocks() const { return (numel() + block_size - 1) / block_size; }
  bool double_quant() const { return dq.has_value(); }
  std::uint8_t code(std::size_t i) const;
  double block_absmax(std::size_t block) const;
  // Throws a format error when payload lengths disagree with the shape.
  void validate() const;
  std::size_t payload_bytes() const;
};

bool operator==(const DoubleQuantMeta& a, const DoubleQuantMeta& b);
bool operator==(const QuantizedTensor& a, const QuantizedTensor& b);

QuantizedTensor quantize_nf4(const numerics::Tensor& t, std::size_t block_size = kDefaultBlockSize,
                             bool double_quant = false, std::size_t dq_group = kDefaultDoubleQuantGroup);
numerics::Tensor dequantize(const QuantizedTensor& q);

// Bits of scale metadata per parameter on top of the 4-bit codes. Excludes
// the tensor-wide double-quant offset, which does not scale with size.
double scale_overhead_bits_per_param(std::size_t block_size, bool double_quant,
                                     std::size_t dq_group = kDefaultDoubleQuantGroup);

}  // namespace prunekit::quant
