// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "json.hpp"
#include "pipeline/recipe.hpp"

namespace prunekit::pipeline {

struct RenderedReport {
  std::string text;
  nlohmann::json json;
};

// One row per stage: scores, logical and adapter parameter counts, packed
// storage (bytes and decimal GB) and retention against the teacher. Numbers
// are rounded once and shared by both renderings.
RenderedReport render_report(const ExperimentManifest& manifest);

}  // namespace prunekit::pipeline
