// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>

#include "data/corpus.hpp"
#include "metrics/metrics.hpp"
#include "model/train.hpp"

namespace prunekit::testing {

struct Fixture {
  model::TransformerModel model;
  std::vector<data::Segment> dev;
  std::vector<model::TrainExample> train;
};

inline model::ModelConfig fixture_config(std::size_t dec) {
  model::ModelConfig c;
  c.vocab_size = 16;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.encoder_layers = 1;
  c.decoder_layers = dec;
  c.max_positions = 16;
  return c;
}

// Briefly trained on a small cipher task so that layer removals score differently.
inline const Fixture& trained(std::size_t dec = 6) {
  static std::map<std::size_t, Fixture> cache;
  auto it = cache.find(dec);
  if (it != cache.end()) return it->second;
  auto spec = data::TaskSpec::make(16, 2, 3);
  spec.min_len = 2;
  spec.max_len = 5;
  const auto corpus = data::train_test_split(data::gen_corpus(spec, 140, 4), 20, 0, 20);
  Rng rng(5);
  Fixture f{model::TransformerModel::build(fixture_config(dec), rng), corpus.split("dev"),
            data::to_examples(corpus.split("train"))};
  model::TrainConfig tc;
  tc.epochs = 6;
  tc.learning_rate = 3e-3;
  tc.seed = 1;
  model::train_full(f.model, f.train, tc);
  return cache.emplace(dec, std::move(f)).first->second;
}

// Independent greedy search: decode, chrF, argmax with lowest-index ties.
inline std::vector<int> oracle_greedy(const model::TransformerModel& start, const std::vector<data::Segment>& dev, std::size_t n,
                               std::vector<std::vector<double>>* round_scores) {
  model::TransformerModel cur = start.clone();
  std::vector<int> removed;
  for (std::size_t round = 0; round < n; ++round) {
    int best = -1;
    double best_score = -1;
    std::vector<double> scores;
    for (const auto& l : cur.decoder()) {
      model::TransformerModel trial = cur.clone();
      trial.remove_layer(l.id);
      std::vector<std::string> hyps, refs;
      for (const auto& s : dev) {
        auto out = trial.greedy_decode(s.source, 16);
        if (!out.empty() && out.back() == model::kEos) out.pop_back();
        hyps.push_back(data::render(out));
        refs.push_back(data::render(s.target));
      }
      const double sc = metrics::chrf(hyps, refs).score;
      scores.push_back(sc);
      if (sc > best_score) {
        best_score = sc;
        best = l.id.original_index;
      }
    }
    round_scores->push_back(scores);
    cur.remove_layer({model::Pool::kDecoder, best});
    removed.push_back(best);
  }
  return removed;
}

}  // namespace prunekit::testing
