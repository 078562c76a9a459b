// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "model/transformer.hpp"

namespace prunekit::quant {

inline constexpr double kBytesPerGB = 1000.0 * 1000.0 * 1000.0;

struct StorageOptions {
  // Account dense tensors at 2 bytes per parameter instead of 4.
  bool bf16 = false;
};

struct StorageReport {
  std::uint64_t dense_params = 0;
  std::uint64_t dense_bytes = 0;
  std::uint64_t nf4_params = 0;
  std::uint64_t nf4_code_bytes = 0;
  std::uint64_t nf4_scale_bytes = 0;
  std::uint64_t adapter_params = 0;
  std::uint64_t adapter_bytes = 0;
  std::uint64_t total_bytes = 0;
  bool bf16 = false;

  double gigabytes() const { return static_cast<double>(total_bytes) / kBytesPerGB; }
  nlohmann::json to_json() const;
};

// Model-file payload bytes: dense tensors at the declared width, packed
// nibbles plus scale metadata for NF4 tensors, and attached adapters.
StorageReport storage_bytes(const model::TransformerModel& m, const StorageOptions& options = {});
StorageReport storage_bytes(const std::string& checkpoint_path, const StorageOptions& options = {});

// Payload of `params` dense parameters at the declared width.
std::uint64_t dense_storage_bytes(std::uint64_t params, bool bf16);
double to_decimal_gb(std::uint64_t bytes);
// Fixed two-decimal rendering of bytes / 1000^3.
std::string format_gb(std::uint64_t bytes);

}  // namespace prunekit::quant
