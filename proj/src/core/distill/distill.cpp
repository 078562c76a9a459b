// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "distill/distill.hpp"

#include <algorithm>
#include <unordered_set>

#include "common.hpp"

namespace prunekit::distill {

std::vector<data::Segment> generate_kd(const model::TransformerModel& teacher,
                                       const std::vector<std::vector<int>>& sources, std::size_t max_len) {
  std::vector<data::Segment> out;
  out.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    try {
      auto hyp = teacher.greedy_decode(sources[i], max_len);
      if (!hyp.empty() && hyp.back() == model::kEos) hyp.pop_back();
      out.push_back({sources[i], std::move(hyp), data::Provenance::kDistilled});
    } catch (const Error& e) {
      fail(e.kind(), "distillation failed on segment " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

data::ParallelCorpus augment(const std::vector<data::Segment>& authentic, const std::vector<data::Segment>& distilled,
                             data::DedupKey key) {
  data::ParallelCorpus out;
  std::unordered_set<std::string> seen;
  auto add = [&](const data::Segment& s) {
    if (seen.insert(data::dedup_key(s, key)).second) out.segments.push_back(s);
  };
  for (const auto& s : authentic) add(s);
  for (const auto& s : distilled) add(s);
  return out;
}

data::ParallelCorpus oversample(const data::ParallelCorpus& corpus, const std::vector<data::Provenance>& filter,
                                std::size_t factor) {
  if (factor == 0) fail(ErrorKind::kArgument, "oversample: factor must be >= 1");
  data::ParallelCorpus out;
  for (const auto& s : corpus.segments) {
    const bool match = std::find(filter.begin(), filter.end(), s.provenance) != filter.end();
    const std::size_t reps = match ? factor : 1;
    for (std::size_t r = 0; r < reps; ++r) out.segments.push_back(s);
  }
  return out;
}

data::ParallelCorpus shuffled(const data::ParallelCorpus& corpus, std::uint64_t seed) {
  data::ParallelCorpus out;
  out.segments = corpus.segments;
  Rng rng(seed);
  for (std::size_t i = out.segments.size(); i > 1; --i) std::swap(out.segments[i - 1], out.segments[rng.below(i)]);
  return out;
}

}  // namespace prunekit::distill
