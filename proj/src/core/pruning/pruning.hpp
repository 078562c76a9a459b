// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <utility>
#include <vector>

#include "data/corpus.hpp"
#include "json.hpp"
#include "metrics/metrics.hpp"
#include "model/train.hpp"
#include "model/transformer.hpp"

namespace prunekit::pruning {

using model::LayerId;

enum class StrategyKind { kIterative, kMiddle, kIterativeRecovery };
enum class PoolScope { kDecoderOnly, kEncoderAndDecoder };

const char* strategy_name(StrategyKind k);
StrategyKind parse_strategy(const std::string& s);
const char* scope_name(PoolScope p);
PoolScope parse_scope(const std::string& s);

struct PruningStrategy {
  StrategyKind kind = StrategyKind::kIterative;
  std::size_t target_removals = 0;
  PoolScope pool = PoolScope::kDecoderOnly;
  metrics::ScorerConfig selection_metric = metrics::ScorerConfig::for_kind(metrics::MetricKind::kChrf);
  std::size_t max_len = model::kDefaultMaxDecode;

  // Refuses budgets that would empty a stack of `m`.
  void validate(const model::TransformerModel& m) const;
  nlohmann::json to_json() const;
  static PruningStrategy from_json(const nlohmann::json& j);
};

using ScoreTable = std::vector<std::pair<LayerId, double>>;

struct ImportanceReport {
  std::size_t iteration = 0;
  ScoreTable candidate_scores;  // ascending by LayerId
  LayerId chosen;
};

struct PruningPlan {
  PruningStrategy strategy;
  std::vector<LayerId> removed;
  std::vector<ImportanceReport> rounds;  // empty for middle pruning
  std::size_t finetune_runs = 0;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
  static PruningPlan from_json(const nlohmann::json& j);
};

struct PruneResult {
  model::TransformerModel model;
  PruningPlan plan;
};

// Layers a strategy may remove next: every layer of each stack in scope that
// still holds more than one layer, ascending by LayerId.
std::vector<LayerId> candidate_layers(const model::TransformerModel& m, PoolScope pool);

// Greedy-decodes the dev sources (bos/eos stripped) and scores them against
// the dev targets.
double score_model(const model::TransformerModel& m, const std::vector<data::Segment>& devset,
                   const metrics::Scorer& scorer, std::size_t max_len = model::kDefaultMaxDecode);

// Dev-set score of each candidate with that single layer removed. The input
// model is not modified.
ScoreTable evaluate_layer_importance(const model::TransformerModel& m, const std::vector<data::Segment>& devset,
                                     const metrics::Scorer& scorer, PoolScope pool,
                                     std::size_t max_len = model::kDefaultMaxDecode);

// Highest score; ties go to the lowest original index, then encoder first.
LayerId choose_layer(const ScoreTable& scores);

// Middle block [floor((D - n) / 2), floor((D - n) / 2) + n) of a depth-D stack.
std::vector<int> middle_indices(std::size_t depth, std::size_t n);

// Each `scorer` argument overrides strategy.selection_metric when given,
// which is how custom metrics plug in.
PruneResult prune_iteratively(const model::TransformerModel& m, const PruningStrategy& strategy,
                              const std::vector<data::Segment>& devset, const metrics::Scorer* scorer = nullptr);
// Decoder-only scope removes the middle block of the decoder; the joint scope
// removes a middle block of n layers from each stack.
PruneResult prune_middle(const model::TransformerModel& m, const PruningStrategy& strategy);
// Iterative pruning with train_full on `train` after every removal.
PruneResult prune_with_recovery(const model::TransformerModel& m, const PruningStrategy& strategy,
                                const std::vector<data::Segment>& devset, const model::TrainConfig& train_cfg,
                                const std::vector<model::TrainExample>& train, const metrics::Scorer* scorer = nullptr);

// Dispatches on strategy.kind; recovery needs train data.
PruneResult prune(const model::TransformerModel& m, const PruningStrategy& strategy,
                  const std::vector<data::Segment>& devset, const model::TrainConfig* train_cfg = nullptr,
                  const std::vector<model::TrainExample>* train = nullptr, const metrics::Scorer* scorer = nullptr);

// Removes plan.removed from a copy of `m` in order.
model::TransformerModel replay_plan(const model::TransformerModel& m, const PruningPlan& plan);

}  // namespace prunekit::pruning
