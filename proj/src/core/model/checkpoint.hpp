// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "model/transformer.hpp"

namespace prunekit::model {

inline constexpr char kCheckpointMagic[4] = {'P', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kNf4Packed = 1 };

struct Checkpoint {
  TransformerModel model;
  // Free-form metadata: stage name, seed, pruning plan reference.
  nlohmann::json metadata = nlohmann::json::object();
};

// Little-endian binary layout, see docs/checkpoint_format.md.
std::string serialize_checkpoint(const TransformerModel& m, const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const TransformerModel& m, const std::string& path,
                     const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint load_checkpoint(const std::string& path);

}  // namespace prunekit::model
