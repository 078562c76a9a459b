// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "lora/adapter.hpp"
#include "model/train.hpp"
#include "model/transformer.hpp"

namespace prunekit::lora {

// Attaches an adapter to every linear module (attention q/k/v/o, FFN in/out
// and the output projection) and freezes all base parameters.
void attach_adapters(model::TransformerModel& m, const LoraConfig& config, Rng& rng);

struct QloraResult {
  model::TrainResult train;
  // Set when the base was not quantized: the run was plain LoRA.
  std::vector<std::string> notes;
};

// Adapter-only fine-tuning. Base tensors and quantized payloads are left
// bitwise unchanged.
QloraResult qlora_finetune(model::TransformerModel& m, const std::vector<model::TrainExample>& data,
                           const model::TrainConfig& train_cfg);

// Folds scale * up * down into each full-precision base and drops the
// adapters. Refused when any adapted base is quantized.
void merge_adapters(model::TransformerModel& m);

double trainable_fraction(const model::TransformerModel& m);

}  // namespace prunekit::lora
