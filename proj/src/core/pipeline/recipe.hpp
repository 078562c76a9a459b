// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "data/corpus.hpp"
#include "json.hpp"
#include "model/train.hpp"
#include "model/transformer.hpp"
#include "quant/storage.hpp"

namespace prunekit::pipeline {

enum class StageKind { kTrainFull, kPrune, kFinetune, kDistillAugment, kQuantize, kQloraFinetune, kEvaluate };

const char* stage_kind_name(StageKind k);
StageKind parse_stage_kind(const std::string& s);

struct StageConfig {
  StageKind kind = StageKind::kEvaluate;
  std::string name;         // defaults to the kind name
  nlohmann::json params;    // stage-specific settings, validated at load time
};

// Where the corpus comes from: generated from task settings, or loaded from
// a JSONL file (plus optional task file for out-of-domain generation).
struct DataConfig {
  std::size_t vocab_size = 40;
  std::size_t reorder_window = 3;
  std::uint64_t task_seed = 0;
  std::size_t min_len = 4;
  std::size_t max_len = 10;
  std::size_t n = 884;
  std::uint64_t corpus_seed = 1;
  std::size_t test_size = 100;
  std::size_t dev_size = 50;
  std::uint64_t split_seed = 0;
  std::string corpus_path;
  std::string task_path;
};

struct RecipeConfig {
  std::string name = "recipe";
  std::uint64_t seed = 0;
  std::string output_dir = "prunekit_run";
  std::string report_path;  // optional text report
  DataConfig data;
  model::ModelConfig model;
  std::size_t eval_max_len = model::kDefaultMaxDecode;
  bool storage_bf16 = false;
  // Split used for layer-importance scoring; "test" reproduces scoring on the
  // final test split.
  std::string importance_split = "dev";
  std::vector<StageConfig> stages;

  // Canonical JSON; parsing the result gives back an equal config.
  nlohmann::json to_json() const;
  static RecipeConfig from_json(const nlohmann::json& j);
  static RecipeConfig load(const std::string& path);
  // Throws a config error for unknown stage parameters or an illegal order.
  void validate() const;
  std::string fingerprint() const;
};

nlohmann::json model_config_to_json(const model::ModelConfig& c);
model::ModelConfig model_config_from_json(const nlohmann::json& j, const model::ModelConfig& defaults = {});
model::TrainConfig train_config_from_json(const nlohmann::json& j, const model::TrainConfig& defaults = {});

// Corpus scores of one model on one split.
struct ScoreSet {
  double bleu = 0.0;
  double chrf = 0.0;
  double chrfpp = 0.0;

  nlohmann::json to_json() const;
  static ScoreSet from_json(const nlohmann::json& j);
};

// Student / teacher per metric; nullopt when the teacher scored 0.
using Retention = std::map<std::string, std::optional<double>>;
Retention quality_retention(const ScoreSet& student, const ScoreSet& teacher);
std::string format_retention(const std::optional<double>& r);

struct StageRecord {
  std::size_t index = 0;
  std::string name;
  StageKind kind = StageKind::kEvaluate;
  std::string status;  // "ok", "cached" or "failed"
  std::string error;
  std::string fingerprint;
  std::string checkpoint;
  ScoreSet scores;
  Retention retention;
  std::uint64_t params = 0;
  std::uint64_t adapter_params = 0;
  std::uint64_t trainable_params = 0;
  quant::StorageReport storage;
  std::size_t encoder_layers = 0;
  std::size_t decoder_layers = 0;
  std::size_t train_corpus_size = 0;
  double final_loss = 0.0;
  double wall_clock_s = 0.0;
  nlohmann::json details = nlohmann::json::object();  // pruning plan, notes
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
  static StageRecord from_json(const nlohmann::json& j);
};

struct ExperimentManifest {
  std::string recipe_name;
  std::string recipe_fingerprint;
  std::string output_dir;
  std::string status = "ok";  // "ok" or "failed"
  std::string teacher_stage;
  std::vector<StageRecord> stages;

  bool ok() const { return status == "ok"; }
  nlohmann::json to_json() const;
  static ExperimentManifest from_json(const nlohmann::json& j);
  static ExperimentManifest load(const std::string& path);
  // Scores of every stage, in order; the reproducibility check compares these.
  nlohmann::json metric_values() const;
};

struct RunOptions {
  bool force = false;  // rerun stages whose fingerprint matches a stored result
  bool verbose = false;
};

// Runs the stages in order, writing per-stage checkpoints and records plus
// manifest.json under output_dir. A failing stage is recorded and halts the
// run; config problems throw before anything runs.
ExperimentManifest run_recipe(const RecipeConfig& config, const RunOptions& options = {});

// Reruns the recipe once per out-of-domain size (distill_augment's ood_n),
// each in its own subdirectory.
std::vector<ExperimentManifest> run_ood_sweep(const RecipeConfig& config, const std::vector<std::size_t>& ood_sizes,
                                              const RunOptions& options = {});

// Built-in recipes for the toy task.
RecipeConfig setup1_recipe(std::uint64_t seed = 0);
RecipeConfig setup2_recipe(std::uint64_t seed = 0);

}  // namespace prunekit::pipeline
