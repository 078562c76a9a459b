// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "pruning/pruning.hpp"

#include <algorithm>

#include "common.hpp"

namespace prunekit::pruning {

using model::Pool;
using model::TransformerModel;

const char* strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::kIterative: return "iterative";
    case StrategyKind::kMiddle: return "middle";
    case StrategyKind::kIterativeRecovery: return "iterative_recovery";
  }
  return "?";
}

StrategyKind parse_strategy(const std::string& s) {
  if (s == "iterative") return StrategyKind::kIterative;
  if (s == "middle") return StrategyKind::kMiddle;
  if (s == "iterative_recovery" || s == "recovery") return StrategyKind::kIterativeRecovery;
  fail(ErrorKind::kConfig, "unknown pruning strategy '" + s + "' (expected iterative, middle or recovery)");
}

const char* scope_name(PoolScope p) {
  return p == PoolScope::kDecoderOnly ? "decoder_only" : "encoder_and_decoder";
}

PoolScope parse_scope(const std::string& s) {
  if (s == "decoder_only" || s == "decoder") return PoolScope::kDecoderOnly;
  if (s == "encoder_and_decoder" || s == "both") return PoolScope::kEncoderAndDecoder;
  fail(ErrorKind::kConfig, "unknown pruning pool '" + s + "'");
}

void PruningStrategy::validate(const TransformerModel& m) const {
  selection_metric.validate();
  const std::size_t enc = m.depth(Pool::kEncoder);
  const std::size_t dec = m.depth(Pool::kDecoder);
  if (kind == StrategyKind::kMiddle) {
    if (target_removals >= dec || (pool == PoolScope::kEncoderAndDecoder && target_removals >= enc)) {
      fail(ErrorKind::kRefused, "middle pruning of " + std::to_string(target_removals) +
                                    " layers would empty a stack (encoder " + std::to_string(enc) + ", decoder " +
                                    std::to_string(dec) + ")");
    }
    return;
  }
  const std::size_t available = (dec - 1) + (pool == PoolScope::kEncoderAndDecoder ? enc - 1 : 0);
  if (target_removals > available) {
    fail(ErrorKind::kRefused, "pool exhausted: " + std::to_string(target_removals) + " removals requested, " +
                                  std::to_string(available) + " layers removable in " + scope_name(pool));
  }
}

nlohmann::json PruningStrategy::to_json() const {
  return {{"kind", strategy_name(kind)},
          {"target_removals", target_removals},
          {"pool", scope_name(pool)},
          {"selection_metric", selection_metric.to_json()},
          {"max_len", max_len}};
}

PruningStrategy PruningStrategy::from_json(const nlohmann::json& j) {
  PruningStrategy s;
  try {
    s.kind = parse_strategy(j.value("kind", std::string("iterative")));
    s.target_removals = j.value("target_removals", s.target_removals);
    s.pool = parse_scope(j.value("pool", std::string("decoder_only")));
    if (j.contains("selection_metric")) s.selection_metric = metrics::ScorerConfig::from_json(j.at("selection_metric"));
    s.max_len = j.value("max_len", s.max_len);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("pruning strategy: ") + e.what());
  }
  return s;
}

namespace {

nlohmann::json layer_json(const LayerId& id) { return {{"pool", model::pool_name(id.pool)}, {"original_index", id.original_index}}; }

LayerId layer_from_json(const nlohmann::json& j) {
  return {model::parse_pool(j.at("pool").get<std::string>()), j.at("original_index").get<int>()};
}

}  // namespace

nlohmann::json PruningPlan::to_json() const {
  nlohmann::json j;
  j["strategy"] = strategy.to_json();
  j["removed"] = nlohmann::json::array();
  for (const auto& id : removed) j["removed"].push_back(layer_json(id));
  j["rounds"] = nlohmann::json::array();
  for (const auto& r : rounds) {
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& [id, s] : r.candidate_scores) {
      nlohmann::json e = layer_json(id);
      e["score"] = s;
      scores.push_back(e);
    }
    j["rounds"].push_back({{"iteration", r.iteration}, {"scores", scores}, {"chosen", layer_json(r.chosen)}});
  }
  j["finetune_runs"] = finetune_runs;
  j["notes"] = notes;
  return j;
}

PruningPlan PruningPlan::from_json(const nlohmann::json& j) {
  PruningPlan p;
  try {
    p.strategy = PruningStrategy::from_json(j.at("strategy"));
    for (const auto& e : j.at("removed")) p.removed.push_back(layer_from_json(e));
    for (const auto& r : j.value("rounds", nlohmann::json::array())) {
      ImportanceReport rep;
      rep.iteration = r.at("iteration").get<std::size_t>();
      for (const auto& e : r.at("scores")) rep.candidate_scores.emplace_back(layer_from_json(e), e.at("score").get<double>());
      rep.chosen = layer_from_json(r.at("chosen"));
      p.rounds.push_back(std::move(rep));
    }
    p.finetune_runs = j.value("finetune_runs", std::size_t{0});
    p.notes = j.value("notes", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("pruning plan: ") + e.what());
  }
  return p;
}

std::vector<LayerId> candidate_layers(const TransformerModel& m, PoolScope pool) {
  std::vector<LayerId> out;
  if (pool == PoolScope::kEncoderAndDecoder && m.depth(Pool::kEncoder) > 1) {
    for (const auto& id : m.layer_ids(Pool::kEncoder)) out.push_back(id);
  }
  if (m.depth(Pool::kDecoder) > 1) {
    for (const auto& id : m.layer_ids(Pool::kDecoder)) out.push_back(id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double score_model(const TransformerModel& m, const std::vector<data::Segment>& devset, const metrics::Scorer& scorer,
                   std::size_t max_len) {
  if (devset.empty()) fail(ErrorKind::kArgument, "score_model: empty devset");
  std::vector<std::string> hyps, refs;
  hyps.reserve(devset.size());
  refs.reserve(devset.size());
  for (const auto& s : devset) {
    auto out = m.greedy_decode(s.source, max_len);
    if (!out.empty() && out.back() == model::kEos) out.pop_back();
    hyps.push_back(data::render(out));
    refs.push_back(data::render(s.target));
  }
  return scorer.score(hyps, refs);
}

ScoreTable evaluate_layer_importance(const TransformerModel& m, const std::vector<data::Segment>& devset,
                                     const metrics::Scorer& scorer, PoolScope pool, std::size_t max_len) {
  if (devset.empty()) fail(ErrorKind::kArgument, "evaluate_layer_importance: empty devset");
  ScoreTable out;
  for (const auto& id : candidate_layers(m, pool)) {
    try {
      TransformerModel trial = m;  // shares weights; removal only edits the stack
      trial.remove_layer(id);
      out.emplace_back(id, score_model(trial, devset, scorer, max_len));
    } catch (const Error& e) {
      fail(e.kind(), "importance evaluation failed for layer " + id.str() + ": " + e.what());
    }
  }
  return out;
}

LayerId choose_layer(const ScoreTable& scores) {
  if (scores.empty()) fail(ErrorKind::kRefused, "no candidate layers left to prune");
  auto better = [](const std::pair<LayerId, double>& a, const std::pair<LayerId, double>& b) {
    if (a.second != b.second) return a.second > b.second;
    if (a.first.original_index != b.first.original_index) return a.first.original_index < b.first.original_index;
    return a.first.pool < b.first.pool;
  };
  return std::min_element(scores.begin(), scores.end(), better)->first;
}

std::vector<int> middle_indices(std::size_t depth, std::size_t n) {
  if (n >= depth) {
    fail(ErrorKind::kRefused, "cannot remove " + std::to_string(n) + " of " + std::to_string(depth) +
                                  " layers: at least one must remain");
  }
  const std::size_t start = (depth - n) / 2;
  std::vector<int> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<int>(start + i));
  return out;
}

namespace {

metrics::Scorer selection_scorer(const PruningStrategy& s, const metrics::Scorer* override_scorer) {
  return override_scorer ? *override_scorer : metrics::Scorer(s.selection_metric);
}

PruneResult greedy(const TransformerModel& m, const PruningStrategy& strategy, const std::vector<data::Segment>& devset,
                   const metrics::Scorer& scorer, const model::TrainConfig* train_cfg,
                   const std::vector<model::TrainExample>* train) {
  strategy.validate(m);
  PruneResult r{m.clone(), {}};
  r.plan.strategy = strategy;
  for (std::size_t it = 0; it < strategy.target_removals; ++it) {
    ImportanceReport rep;
    rep.iteration = it;
    rep.candidate_scores = evaluate_layer_importance(r.model, devset, scorer, strategy.pool, strategy.max_len);
    rep.chosen = choose_layer(rep.candidate_scores);
    r.model.remove_layer(rep.chosen);
    r.plan.removed.push_back(rep.chosen);
    r.plan.rounds.push_back(std::move(rep));
    if (train_cfg) {
      model::TrainConfig cfg = *train_cfg;
      cfg.seed = train_cfg->seed + it;
      model::train_full(r.model, *train, cfg);
      ++r.plan.finetune_runs;
    }
  }
  if (train_cfg) {
    r.plan.notes.push_back("fine-tuned after every removal; later choices reflect the recovered model");
  }
  return r;
}

}  // namespace

PruneResult prune_iteratively(const TransformerModel& m, const PruningStrategy& strategy,
                              const std::vector<data::Segment>& devset, const metrics::Scorer* scorer) {
  if (strategy.kind != StrategyKind::kIterative) fail(ErrorKind::kConfig, "prune_iteratively needs kind iterative");
  return greedy(m, strategy, devset, selection_scorer(strategy, scorer), nullptr, nullptr);
}

PruneResult prune_middle(const TransformerModel& m, const PruningStrategy& strategy) {
  if (strategy.kind != StrategyKind::kMiddle) fail(ErrorKind::kConfig, "prune_middle needs kind middle");
  strategy.validate(m);
  PruneResult r{m.clone(), {}};
  r.plan.strategy = strategy;
  std::vector<Pool> pools;
  if (strategy.pool == PoolScope::kEncoderAndDecoder) pools.push_back(Pool::kEncoder);
  pools.push_back(Pool::kDecoder);
  for (Pool p : pools) {
    const auto ids = m.layer_ids(p);
    for (int pos : middle_indices(ids.size(), strategy.target_removals)) {
      r.model.remove_layer(ids[static_cast<std::size_t>(pos)]);
      r.plan.removed.push_back(ids[static_cast<std::size_t>(pos)]);
    }
  }
  return r;
}

PruneResult prune_with_recovery(const TransformerModel& m, const PruningStrategy& strategy,
                                const std::vector<data::Segment>& devset, const model::TrainConfig& train_cfg,
                                const std::vector<model::TrainExample>& train, const metrics::Scorer* scorer) {
  if (strategy.kind != StrategyKind::kIterativeRecovery) {
    fail(ErrorKind::kConfig, "prune_with_recovery needs kind iterative_recovery");
  }
  if (train.empty()) fail(ErrorKind::kArgument, "prune_with_recovery: empty training corpus");
  return greedy(m, strategy, devset, selection_scorer(strategy, scorer), &train_cfg, &train);
}

PruneResult prune(const TransformerModel& m, const PruningStrategy& strategy, const std::vector<data::Segment>& devset,
                  const model::TrainConfig* train_cfg, const std::vector<model::TrainExample>* train,
                  const metrics::Scorer* scorer) {
  switch (strategy.kind) {
    case StrategyKind::kIterative: return prune_iteratively(m, strategy, devset, scorer);
    case StrategyKind::kMiddle: return prune_middle(m, strategy);
    case StrategyKind::kIterativeRecovery:
      if (!train_cfg || !train) fail(ErrorKind::kConfig, "recovery pruning needs a training corpus and config");
      return prune_with_recovery(m, strategy, devset, *train_cfg, *train, scorer);
  }
  fail(ErrorKind::kConfig, "unknown pruning strategy");
}

TransformerModel replay_plan(const TransformerModel& m, const PruningPlan& plan) {
  TransformerModel out = m.clone();
  for (const auto& id : plan.removed) out.remove_layer(id);
  return out;
}

}  // namespace prunekit::pruning
