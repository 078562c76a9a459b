// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace prunekit::numerics {

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, std::vector<NamedTensor>& params,
                           const GradCheckOptions& options,
                           const std::function<void(std::vector<NamedTensor>&)>& analytic_override) {
  for (auto& p : params) p.tensor.zero_grad();
  loss_fn().backward();
  if (analytic_override) analytic_override(params);

  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    analytic.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
    analytic.back().resize(p.tensor.numel(), 0.0);
  }

  GradCheckReport report;
  Rng rng(options.seed);
  NoGradGuard no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto w = params[pi].tensor.data();
    std::vector<std::size_t> idx(w.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (options.max_entries_per_param > 0 && idx.size() > options.max_entries_per_param) {
      for (std::size_t i = 0; i < options.max_entries_per_param; ++i) {
        std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      }
      idx.resize(options.max_entries_per_param);
    }
    for (std::size_t j : idx) {
      const double orig = w[j];
      w[j] = orig + options.h;
      const double up = loss_fn().item();
      w[j] = orig - options.h;
      const double down = loss_fn().item();
      w[j] = orig;
      const double numeric = (up - down) / (2.0 * options.h);
      const double a = analytic[pi][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = params[pi].name;
      }
      if (rel > options.tol) report.failures.push_back({params[pi].name, j, a, numeric, rel});
    }
  }
  return report;
}

}  // namespace prunekit::numerics
