// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "quant/storage.hpp"

#include <cstdio>

#include "model/checkpoint.hpp"

namespace prunekit::quant {

nlohmann::json StorageReport::to_json() const {
  return {{"dense_params", dense_params},
          {"dense_bytes", dense_bytes},
          {"nf4_params", nf4_params},
          {"nf4_code_bytes", nf4_code_bytes},
          {"nf4_scale_bytes", nf4_scale_bytes},
          {"adapter_params", adapter_params},
          {"adapter_bytes", adapter_bytes},
          {"total_bytes", total_bytes},
          {"gigabytes", gigabytes()},
          {"accounting", bf16 ? "bf16" : "f32"}};
}

std::uint64_t dense_storage_bytes(std::uint64_t params, bool bf16) { return params * (bf16 ? 2 : 4); }

double to_decimal_gb(std::uint64_t bytes) { return static_cast<double>(bytes) / kBytesPerGB; }

std::string format_gb(std::uint64_t bytes) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", to_decimal_gb(bytes));
  return buf;
}

StorageReport storage_bytes(const model::TransformerModel& m, const StorageOptions& options) {
  StorageReport r;
  r.bf16 = options.bf16;
  m.for_each_tensor([&](const std::string&, const numerics::Tensor& t) { r.dense_params += t.numel(); });
  m.for_each_linear([&](const std::string&, const model::Linear& l) {
    if (l.quantized) {
      r.nf4_params += l.quantized->numel();
      r.nf4_code_bytes += l.quantized->packed.size();
      r.nf4_scale_bytes += l.quantized->payload_bytes() - l.quantized->packed.size();
    }
    if (l.adapter) r.adapter_params += l.adapter->param_count();
  });
  r.dense_bytes = dense_storage_bytes(r.dense_params, options.bf16);
  r.adapter_bytes = dense_storage_bytes(r.adapter_params, options.bf16);
  r.total_bytes = r.dense_bytes + r.nf4_code_bytes + r.nf4_scale_bytes + r.adapter_bytes;
  return r;
}

StorageReport storage_bytes(const std::string& checkpoint_path, const StorageOptions& options) {
  return storage_bytes(model::load_checkpoint(checkpoint_path).model, options);
}

}  // namespace prunekit::quant
