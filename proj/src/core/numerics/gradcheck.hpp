// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "numerics/optim.hpp"

namespace prunekit::numerics {

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::string worst_param;
  std::size_t checked = 0;
  std::vector<GradCheckEntry> failures;
  bool passed() const { return failures.empty(); }
};

struct GradCheckOptions {
  double h = 1e-4;
  double tol = 1e-3;
  // Entries per parameter; 0 checks every element.
  std::size_t max_entries_per_param = 0;
  // Floor for the relative-error denominator so near-zero gradients are
  // compared absolutely.
  double abs_floor = 1e-6;
  std::uint64_t seed = 0;
};

// Compares central differences of loss_fn against gradients produced by
// backward(). When `analytic_override` is set it supplies the analytic
// gradients instead (used to inject corrupted gradients in tests).
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, std::vector<NamedTensor>& params,
                           const GradCheckOptions& options = {},
                           const std::function<void(std::vector<NamedTensor>&)>& analytic_override = {});

}  // namespace prunekit::numerics
