// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "data/corpus.hpp"
#include "model/transformer.hpp"

namespace prunekit::distill {

// Greedy teacher translations of each source, provenance = distilled.
// Generated targets have bos/eos stripped.
std::vector<data::Segment> generate_kd(const model::TransformerModel& teacher,
                                       const std::vector<std::vector<int>>& sources,
                                       std::size_t max_len = model::kDefaultMaxDecode);

// Authentic segments followed by distilled ones, dropping exact duplicates
// under the dedup key. The first occurrence wins, so authentic copies survive
// collisions and order is stable.
data::ParallelCorpus augment(const std::vector<data::Segment>& authentic, const std::vector<data::Segment>& distilled,
                             data::DedupKey key = data::DedupKey::kPair);

// Repeats every segment whose provenance is in `filter` `factor` times in
// place (repeats adjacent); other segments appear once.
data::ParallelCorpus oversample(const data::ParallelCorpus& corpus, const std::vector<data::Provenance>& filter,
                                std::size_t factor);

// Seeded Fisher-Yates shuffle of the segment order; splits are dropped.
data::ParallelCorpus shuffled(const data::ParallelCorpus& corpus, std::uint64_t seed);

}  // namespace prunekit::distill
