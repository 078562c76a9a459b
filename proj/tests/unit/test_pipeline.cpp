// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "pipeline/recipe.hpp"
#include "pipeline/report.hpp"

using namespace prunekit;
using namespace prunekit::pipeline;
namespace fs = std::filesystem;

namespace {

StageConfig stage(StageKind k, nlohmann::json params = nlohmann::json::object(), std::string name = {}) {
  return {k, name.empty() ? stage_kind_name(k) : std::move(name), std::move(params)};
}

std::string fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("pk_pipeline_" + name);
  fs::remove_all(p);
  return p.string();
}

RecipeConfig small_recipe(const std::string& dir) {
  RecipeConfig r;
  r.name = "unit";
  r.seed = 3;
  r.output_dir = dir;
  r.data.vocab_size = 16;
  r.data.min_len = 2;
  r.data.max_len = 5;
  r.data.n = 120;
  r.data.test_size = 20;
  r.data.dev_size = 10;
  r.model.vocab_size = 16;
  r.model.d_model = 16;
  r.model.n_heads = 2;
  r.model.d_ff = 32;
  r.model.encoder_layers = 1;
  r.model.decoder_layers = 4;
  r.model.max_positions = 16;
  r.eval_max_len = 16;
  r.stages = {
      stage(StageKind::kTrainFull, {{"epochs", 4}, {"lr", 3e-3}}),
      stage(StageKind::kPrune, {{"strategy", "iterative"}, {"layers", 1}}),
      stage(StageKind::kFinetune, {{"epochs", 1}, {"lr", 3e-3}}),
      stage(StageKind::kDistillAugment, {{"oversample", 2}, {"ood_n", 20}}),
      stage(StageKind::kQuantize, {{"double_quant", true}}),
      stage(StageKind::kQloraFinetune, {{"rank", 2}, {"alpha", 4.0}, {"epochs", 1}, {"lr", 3e-3}}),
      stage(StageKind::kEvaluate),
  };
  return r;
}

std::string config_error(const RecipeConfig& r) {
  try {
    r.validate();
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
    return e.what();
  }
  FAIL("recipe accepted");
  return {};
}

}  // namespace

TEST_SUITE("pipeline.config") {
  TEST_CASE("built-in recipes have the documented stage order") {
    auto kinds = [](const RecipeConfig& r) {
      std::vector<std::string> out;
      for (const auto& s : r.stages) out.push_back(stage_kind_name(s.kind));
      return out;
    };
    CHECK(kinds(setup1_recipe()) ==
          std::vector<std::string>{"train_full", "distill_augment", "quantize", "qlora_finetune", "evaluate"});
    CHECK(kinds(setup2_recipe()) == std::vector<std::string>{"train_full", "prune", "finetune", "distill_augment",
                                                             "quantize", "qlora_finetune", "evaluate"});
    CHECK(setup2_recipe(4).output_dir == "setup2_seed4");
  }

  TEST_CASE("illegal orders name both stages") {
    RecipeConfig r = small_recipe("x");
    r.stages = {stage(StageKind::kPrune, {{"layers", 1}}), stage(StageKind::kTrainFull)};
    auto msg = config_error(r);
    CHECK(msg.find("prune") != std::string::npos);
    CHECK(msg.find("train_full") != std::string::npos);

    r.stages = {stage(StageKind::kTrainFull), stage(StageKind::kQloraFinetune)};
    msg = config_error(r);
    CHECK(msg.find("qlora_finetune") != std::string::npos);
    CHECK(msg.find("quantize") != std::string::npos);

    r.stages = {stage(StageKind::kTrainFull), stage(StageKind::kQuantize), stage(StageKind::kPrune, {{"layers", 1}})};
    msg = config_error(r);
    CHECK(msg.find("'prune'") != std::string::npos);
    CHECK(msg.find("'quantize'") != std::string::npos);

    r.stages = {stage(StageKind::kTrainFull), stage(StageKind::kQuantize), stage(StageKind::kTrainFull, nlohmann::json::object(), "again")};
    msg = config_error(r);
    CHECK(msg.find("'again'") != std::string::npos);
    CHECK(msg.find("'quantize'") != std::string::npos);
  }

  TEST_CASE("unknown keys and bad values are config errors") {
    RecipeConfig r = small_recipe("x");
    r.stages[0].params["epoch"] = 3;
    CHECK(config_error(r).find("epoch") != std::string::npos);
    r = small_recipe("x");
    r.stages[1].params["strategy"] = "random";
    config_error(r);
    r = small_recipe("x");
    r.stages[0].name = "prune";
    CHECK(config_error(r).find("duplicate") != std::string::npos);
    nlohmann::json j = small_recipe("x").to_json();
    j["unexpected"] = 1;
    CHECK_THROWS_AS(RecipeConfig::from_json(j), Error);
  }

  TEST_CASE("JSON round-trip and fingerprint") {
    const RecipeConfig r = small_recipe("x");
    const RecipeConfig back = RecipeConfig::from_json(r.to_json());
    CHECK(back.to_json() == r.to_json());
    CHECK(back.fingerprint() == r.fingerprint());
    RecipeConfig other = r;
    other.seed = 4;
    CHECK(other.fingerprint() != r.fingerprint());
  }
}

TEST_SUITE("pipeline.retention") {
  TEST_CASE("ratios per metric") {
    const ScoreSet t{40, 50, 45}, s{20, 55, 45};
    const auto r = quality_retention(s, t);
    CHECK(*r.at("bleu") == 0.5);
    CHECK(*r.at("chrf") == doctest::Approx(1.1));
    CHECK(*r.at("chrf++") == 1.0);
    const auto same = quality_retention(t, t);
    for (const auto& [k, v] : same) CHECK(*v == 1.0);
    CHECK(format_retention(1.0) == "1.00");
  }

  TEST_CASE("teacher 0 is undefined") {
    const auto r = quality_retention({10, 10, 10}, {0, 50, 50});
    CHECK_FALSE(r.at("bleu").has_value());
    CHECK(format_retention(r.at("bleu")) == "undefined");
  }
}

TEST_SUITE("pipeline.run") {
  TEST_CASE("empty recipe gives an empty successful manifest") {
    RecipeConfig r = small_recipe(fresh_dir("empty"));
    r.stages.clear();
    const auto m = run_recipe(r);
    CHECK(m.ok());
    CHECK(m.stages.empty());
    CHECK(fs::exists(fs::path(r.output_dir) / "manifest.json"));
  }

  TEST_CASE("full small recipe: accounting, caching, determinism, report") {
    const RecipeConfig r = small_recipe(fresh_dir("full"));
    const auto m = run_recipe(r);
    REQUIRE(m.ok());
    REQUIRE(m.stages.size() == 7);
    CHECK(m.teacher_stage == "train_full");
    const auto& a = m.stages[0];
    const auto& b = m.stages[1];
    const auto& q = m.stages[4];
    const auto& d = m.stages[5];
    CHECK(b.decoder_layers == 3);
    CHECK(a.params > b.params);
    CHECK(b.params == m.stages[2].params);
    CHECK(q.params == b.params);
    CHECK(d.adapter_params > 0);
    CHECK(a.storage.total_bytes > b.storage.total_bytes);
    CHECK(b.storage.total_bytes > d.storage.total_bytes);
    CHECK(*a.retention.at("chrf") == 1.0);
    CHECK(m.stages[3].train_corpus_size > 0);
    CHECK(b.details.contains("plan"));
    for (const auto& s : m.stages) {
      CHECK(s.status == "ok");
      CHECK(fs::exists(s.checkpoint));
    }

    const auto loaded = ExperimentManifest::load((fs::path(r.output_dir) / "manifest.json").string());
    CHECK(loaded.metric_values() == m.metric_values());

    const auto cached = run_recipe(r);
    for (const auto& s : cached.stages) CHECK(s.status == "cached");
    CHECK(cached.metric_values() == m.metric_values());

    RunOptions force;
    force.force = true;
    const auto rerun = run_recipe(r, force);
    for (const auto& s : rerun.stages) CHECK(s.status == "ok");
    CHECK(rerun.metric_values() == m.metric_values());

    RecipeConfig elsewhere = r;
    elsewhere.output_dir = fresh_dir("full_copy");
    CHECK(run_recipe(elsewhere).metric_values() == m.metric_values());

    // Changing a late stage reuses the earlier ones.
    RecipeConfig changed = r;
    changed.stages[5].params["epochs"] = 2;
    const auto partial = run_recipe(changed);
    for (std::size_t i = 0; i < 5; ++i) CHECK(partial.stages[i].status == "cached");
    CHECK(partial.stages[5].status == "ok");

    const auto rep = render_report(m);
    std::istringstream text(rep.text);
    std::string line;
    std::size_t matched = 0;
    while (std::getline(text, line)) {
      std::istringstream cells(line);
      std::vector<std::string> c;
      for (std::string w; cells >> w;) c.push_back(w);
      for (const auto& row : rep.json["rows"]) {
        if (c.size() != 12 || c[0] != row["stage"].get<std::string>()) continue;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", row["chrf"].get<double>());
        CHECK(c[5] == buf);
        std::snprintf(buf, sizeof buf, "%.2f", row["bleu"].get<double>());
        CHECK(c[3] == buf);
        CHECK(c[6] == std::to_string(row["params"].get<std::uint64_t>()));
        CHECK(c[8] == std::to_string(row["storage_bytes"].get<std::uint64_t>()));
        CHECK(c[9] == "0.00");
        CHECK(row["storage_gb"].get<double>() == 0.0);
        ++matched;
      }
    }
    CHECK(matched == 7);
    CHECK(rep.text.find("1 GB = 1000^3 bytes") != std::string::npos);
  }

  TEST_CASE("a failing stage is recorded and halts the run") {
    RecipeConfig r = small_recipe(fresh_dir("fail"));
    r.stages[1].params["layers"] = 4;  // would empty the decoder
    const auto m = run_recipe(r);
    CHECK_FALSE(m.ok());
    REQUIRE(m.stages.size() == 2);
    CHECK(m.stages[0].status == "ok");
    CHECK(m.stages[1].status == "failed");
    CHECK_FALSE(m.stages[1].error.empty());
    CHECK(render_report(m).text.find("failed") != std::string::npos);
  }
}
