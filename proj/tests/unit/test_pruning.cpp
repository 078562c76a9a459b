// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include "doctest.h"
#include "helpers.hpp"
#include "pruning/pruning.hpp"
#include "pruning_oracle.hpp"

using namespace prunekit;
using namespace prunekit::pruning;
using model::LayerId;
using model::Pool;
using model::TransformerModel;
using testing::fixture_config;
using testing::oracle_greedy;
using testing::trained;

namespace {

PruningStrategy strategy(StrategyKind kind, std::size_t n, PoolScope pool = PoolScope::kDecoderOnly) {
  PruningStrategy s;
  s.kind = kind;
  s.target_removals = n;
  s.pool = pool;
  s.max_len = 16;
  return s;
}

}  // namespace

TEST_SUITE("pruning.importance") {
  TEST_CASE("one entry per candidate, deterministic, model untouched") {
    const auto m = testing::tiny_model(2, 2, 2);
    const auto before = testing::snapshot(m);
    const metrics::Scorer chrf;
    const std::vector<data::Segment> dev = {{{3, 4, 5}, {5, 4, 3}}, {{6, 7}, {7, 6}}};
    const auto a = evaluate_layer_importance(m, dev, chrf, PoolScope::kDecoderOnly, 8);
    CHECK(a.size() == 2);
    CHECK(a == evaluate_layer_importance(m, dev, chrf, PoolScope::kDecoderOnly, 8));
    CHECK(testing::snapshot(m) == before);
    CHECK(m.depth(Pool::kDecoder) == 2);
    CHECK(evaluate_layer_importance(m, dev, chrf, PoolScope::kEncoderAndDecoder, 8).size() == 4);
    CHECK_THROWS_AS(evaluate_layer_importance(m, {}, chrf, PoolScope::kDecoderOnly, 8), Error);
  }

  TEST_CASE("single-layer stacks contribute no candidates") {
    const auto m = testing::tiny_model(2, 1, 3);
    CHECK(candidate_layers(m, PoolScope::kEncoderAndDecoder).size() == 3);
  }

  TEST_CASE("a no-op layer scores highest when removed") {
    Rng rng(5);
    auto m = TransformerModel::build(fixture_config(4), rng);
    const std::string noop = "decoder.3.";
    m.mutate_tensors(TransformerModel::TensorVisitor([&](const std::string& name, numerics::Tensor& t) {
      if (!name.starts_with(noop)) return;
      t.set_requires_grad(false);
      if (name.find(".o.") != std::string::npos || name.find("ffn.out.") != std::string::npos) {
        for (double& v : t.data()) v = 0;
      }
    }));
    auto spec = data::TaskSpec::make(16, 2, 3);
    spec.min_len = 2;
    spec.max_len = 5;
    const auto corpus = data::train_test_split(data::gen_corpus(spec, 140, 4), 20, 0, 20);
    model::TrainConfig tc;
    tc.epochs = 6;
    tc.learning_rate = 3e-3;
    model::train_full(m, data::to_examples(corpus.split("train")), tc);
    const auto scores = evaluate_layer_importance(m, corpus.split("dev"), metrics::Scorer{}, PoolScope::kDecoderOnly, 16);
    REQUIRE(scores.size() == 4);
    CHECK(choose_layer(scores) == LayerId{Pool::kDecoder, 3});
    for (std::size_t i = 0; i < 3; ++i) CHECK(scores[i].second < scores[3].second);
    CHECK(scores[3].second == doctest::Approx(score_model(m, corpus.split("dev"), metrics::Scorer{}, 16)));
  }

  TEST_CASE("choose_layer tie-breaking") {
    const ScoreTable t = {{{Pool::kEncoder, 2}, 5.0}, {{Pool::kDecoder, 1}, 7.0}, {{Pool::kDecoder, 4}, 7.0}};
    CHECK(choose_layer(t) == LayerId{Pool::kDecoder, 1});
    const ScoreTable u = {{{Pool::kEncoder, 3}, 7.0}, {{Pool::kDecoder, 3}, 7.0}};
    CHECK(choose_layer(u) == LayerId{Pool::kEncoder, 3});
  }
}

TEST_SUITE("pruning.iterative") {
  TEST_CASE("zero removals leave the model unchanged") {
    const auto& f = trained();
    const auto r = prune_iteratively(f.model, strategy(StrategyKind::kIterative, 0), f.dev);
    CHECK(r.plan.removed.empty());
    CHECK(r.plan.rounds.empty());
    CHECK(testing::snapshot(r.model) == testing::snapshot(f.model));
  }

  TEST_CASE("plan matches an independent greedy search on 6 layers") {
    const auto& f = trained(6);
    const auto r = prune_iteratively(f.model, strategy(StrategyKind::kIterative, 3), f.dev);
    std::vector<std::vector<double>> oracle_scores;
    const auto oracle = oracle_greedy(f.model, f.dev, 3, &oracle_scores);
    REQUIRE(r.plan.removed.size() == 3);
    const auto& first = oracle_scores[0];
    CHECK(*std::max_element(first.begin(), first.end()) > *std::min_element(first.begin(), first.end()));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(r.plan.removed[i] == LayerId{Pool::kDecoder, oracle[i]});
      REQUIRE(r.plan.rounds[i].candidate_scores.size() == oracle_scores[i].size());
      for (std::size_t j = 0; j < oracle_scores[i].size(); ++j) {
        CHECK(r.plan.rounds[i].candidate_scores[j].second == doctest::Approx(oracle_scores[i][j]).epsilon(1e-12));
      }
      const auto& rep = r.plan.rounds[i];
      for (const auto& [id, s] : rep.candidate_scores) {
        const double chosen =
            std::find_if(rep.candidate_scores.begin(), rep.candidate_scores.end(), [&](const auto& p) {
              return p.first == rep.chosen;
            })->second;
        CHECK(s <= chosen);
      }
    }
  }

  TEST_CASE("removing 2 of 8 drops exactly two layer sizes; encoder invariant") {
    const auto& f = trained(8);
    const auto r = prune_iteratively(f.model, strategy(StrategyKind::kIterative, 2), f.dev);
    const auto& c = f.model.config();
    CHECK(f.model.param_count() - r.model.param_count() == 2 * model::decoder_layer_params(c));
    CHECK(r.model.pool_param_count(Pool::kEncoder) == f.model.pool_param_count(Pool::kEncoder));
    const auto replayed = replay_plan(f.model, r.plan);
    CHECK(replayed.layer_ids(Pool::kDecoder) == r.model.layer_ids(Pool::kDecoder));
    CHECK(testing::snapshot(replayed) == testing::snapshot(r.model));
    const auto back = PruningPlan::from_json(r.plan.to_json());
    CHECK(back.removed == r.plan.removed);
    CHECK(back.rounds.size() == 2);
    CHECK(back.rounds[1].candidate_scores == r.plan.rounds[1].candidate_scores);
  }

  TEST_CASE("exhausting the pool is refused") {
    const auto m = testing::tiny_model(2, 1, 3);
    const std::vector<data::Segment> dev = {{{3, 4}, {4, 3}}};
    try {
      prune_iteratively(m, strategy(StrategyKind::kIterative, 3), dev);
      FAIL("accepted a budget that empties the decoder");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kRefused);
    }
  }
}

TEST_SUITE("pruning.middle") {
  TEST_CASE("middle index formula") {
    CHECK(middle_indices(32, 8) == std::vector<int>{12, 13, 14, 15, 16, 17, 18, 19});
    CHECK(middle_indices(8, 2) == std::vector<int>{3, 4});
    CHECK(middle_indices(8, 7) == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
    CHECK(middle_indices(8, 0).empty());
    CHECK_THROWS_AS(middle_indices(8, 8), Error);
  }

  TEST_CASE("32-layer decoder loses layers 12..19") {
    const auto m = testing::tiny_model(1, 1, 32);
    const auto r = prune_middle(m, strategy(StrategyKind::kMiddle, 8));
    REQUIRE(r.plan.removed.size() == 8);
    for (int i = 0; i < 8; ++i) CHECK(r.plan.removed[i] == LayerId{Pool::kDecoder, 12 + i});
    CHECK(4 * (m.pool_param_count(Pool::kDecoder) - r.model.pool_param_count(Pool::kDecoder)) ==
          m.pool_param_count(Pool::kDecoder));
  }

  TEST_CASE("7 of 8 is allowed, 8 of 8 refused") {
    const auto m = testing::tiny_model(1, 1, 8);
    const auto r = prune_middle(m, strategy(StrategyKind::kMiddle, 7));
    CHECK(r.model.layer_ids(Pool::kDecoder) == std::vector<LayerId>{{Pool::kDecoder, 7}});
    try {
      prune_middle(m, strategy(StrategyKind::kMiddle, 8));
      FAIL("emptied the decoder");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kRefused);
    }
  }

  TEST_CASE("joint scope removes the middle of each stack") {
    const auto m = testing::tiny_model(1, 4, 8);
    const auto r = prune_middle(m, strategy(StrategyKind::kMiddle, 2, PoolScope::kEncoderAndDecoder));
    const std::vector<LayerId> expect = {{Pool::kEncoder, 1}, {Pool::kEncoder, 2}, {Pool::kDecoder, 3}, {Pool::kDecoder, 4}};
    CHECK(r.plan.removed == expect);
  }
}

TEST_SUITE("pruning.recovery") {
  TEST_CASE("fine-tune count, single-removal equivalence and recovered quality") {
    const auto& f = trained(6);
    model::TrainConfig tc;
    tc.epochs = 2;
    tc.learning_rate = 3e-3;
    tc.seed = 11;
    const auto rec = prune_with_recovery(f.model, strategy(StrategyKind::kIterativeRecovery, 2), f.dev, tc, f.train);
    CHECK(rec.plan.finetune_runs == 2);
    CHECK(rec.plan.removed.size() == 2);
    CHECK_FALSE(rec.plan.notes.empty());

    const auto one = prune_with_recovery(f.model, strategy(StrategyKind::kIterativeRecovery, 1), f.dev, tc, f.train);
    auto plain = prune_iteratively(f.model, strategy(StrategyKind::kIterative, 1), f.dev);
    CHECK(one.plan.removed == plain.plan.removed);
    model::train_full(plain.model, f.train, tc);
    CHECK(testing::snapshot(one.model) == testing::snapshot(plain.model));

    const auto plain2 = prune_iteratively(f.model, strategy(StrategyKind::kIterative, 2), f.dev);
    const metrics::Scorer chrf;
    CHECK(score_model(rec.model, f.dev, chrf, 16) >= score_model(plain2.model, f.dev, chrf, 16));
  }

  TEST_CASE("dispatch requires training data for recovery") {
    const auto& f = trained(6);
    CHECK_THROWS_AS(prune(f.model, strategy(StrategyKind::kIterativeRecovery, 1), f.dev), Error);
    CHECK(prune(f.model, strategy(StrategyKind::kMiddle, 2), f.dev).plan.removed.size() == 2);
  }
}

TEST_SUITE("pruning.config") {
  TEST_CASE("strategy names and JSON") {
    CHECK(parse_strategy("recovery") == StrategyKind::kIterativeRecovery);
    CHECK(parse_scope("both") == PoolScope::kEncoderAndDecoder);
    CHECK_THROWS_AS(parse_strategy("random"), Error);
    auto s = strategy(StrategyKind::kMiddle, 3, PoolScope::kEncoderAndDecoder);
    const auto back = PruningStrategy::from_json(s.to_json());
    CHECK(back.kind == s.kind);
    CHECK(back.target_removals == 3);
    CHECK(back.pool == s.pool);
    CHECK(back.max_len == 16);
  }
}
