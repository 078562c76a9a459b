// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "pipeline/recipe.hpp"

#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "common.hpp"
#include "distill/distill.hpp"
#include "lora/lora.hpp"
#include "metrics/metrics.hpp"
#include "model/checkpoint.hpp"
#include "pipeline/report.hpp"
#include "pruning/pruning.hpp"
#include "quant/quantize_model.hpp"

namespace prunekit::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

const char* stage_kind_name(StageKind k) {
  switch (k) {
    case StageKind::kTrainFull: return "train_full";
    case StageKind::kPrune: return "prune";
    case StageKind::kFinetune: return "finetune";
    case StageKind::kDistillAugment: return "distill_augment";
    case StageKind::kQuantize: return "quantize";
    case StageKind::kQloraFinetune: return "qlora_finetune";
    case StageKind::kEvaluate: return "evaluate";
  }
  return "?";
}

StageKind parse_stage_kind(const std::string& s) {
  for (StageKind k : {StageKind::kTrainFull, StageKind::kPrune, StageKind::kFinetune, StageKind::kDistillAugment,
                      StageKind::kQuantize, StageKind::kQloraFinetune, StageKind::kEvaluate}) {
    if (s == stage_kind_name(k)) return k;
  }
  fail(ErrorKind::kConfig, "unknown stage kind '" + s + "'");
}

// ---- config (de)serialization ------------------------------------------------

json model_config_to_json(const model::ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},         {"d_model", c.d_model},
          {"n_heads", c.n_heads},               {"d_ff", c.d_ff},
          {"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers},
          {"max_positions", c.max_positions},   {"dropout", c.dropout}};
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::kConfig, where + ": expected a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) fail(ErrorKind::kConfig, where + ": unknown key '" + k + "'");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::kConfig, where + ": key '" + key + "' has the wrong type");
  }
}

}  // namespace

model::ModelConfig model_config_from_json(const json& j, const model::ModelConfig& d) {
  check_keys(j, {"vocab_size", "d_model", "n_heads", "d_ff", "encoder_layers", "decoder_layers", "max_positions", "dropout"},
             "model");
  model::ModelConfig c = d;
  c.vocab_size = get_or(j, "vocab_size", d.vocab_size, "model");
  c.d_model = get_or(j, "d_model", d.d_model, "model");
  c.n_heads = get_or(j, "n_heads", d.n_heads, "model");
  c.d_ff = get_or(j, "d_ff", d.d_ff, "model");
  c.encoder_layers = get_or(j, "encoder_layers", d.encoder_layers, "model");
  c.decoder_layers = get_or(j, "decoder_layers", d.decoder_layers, "model");
  c.max_positions = get_or(j, "max_positions", d.max_positions, "model");
  c.dropout = get_or(j, "dropout", d.dropout, "model");
  model::validate(c);
  return c;
}

model::TrainConfig train_config_from_json(const json& j, const model::TrainConfig& d) {
  model::TrainConfig c = d;
  c.epochs = get_or(j, "epochs", d.epochs, "train");
  c.batch_size = get_or(j, "batch_size", d.batch_size, "train");
  c.learning_rate = get_or(j, "lr", d.learning_rate, "train");
  c.weight_decay = get_or(j, "weight_decay", d.weight_decay, "train");
  c.max_grad_norm = get_or(j, "max_grad_norm", d.max_grad_norm, "train");
  c.shuffle = get_or(j, "shuffle", d.shuffle, "train");
  if (c.batch_size == 0) fail(ErrorKind::kConfig, "train: batch_size must be >= 1");
  if (c.learning_rate < 0) fail(ErrorKind::kConfig, "train: lr must be >= 0");
  return c;
}

namespace {

const std::set<std::string> kTrainKeys = {"epochs", "batch_size", "lr", "weight_decay", "max_grad_norm", "shuffle"};

std::set<std::string> with_train_keys(std::set<std::string> s) {
  s.insert(kTrainKeys.begin(), kTrainKeys.end());
  return s;
}

std::set<std::string> allowed_stage_keys(StageKind k) {
  switch (k) {
    case StageKind::kTrainFull:
    case StageKind::kFinetune: return kTrainKeys;
    case StageKind::kPrune: return with_train_keys({"strategy", "layers", "pool", "metric", "beta"});
    case StageKind::kDistillAugment:
      return {"dedup", "oversample", "oversample_provenance", "ood_n", "ood_seed", "shuffle", "max_len"};
    case StageKind::kQuantize: return {"block_size", "double_quant", "dq_group"};
    case StageKind::kQloraFinetune: return with_train_keys({"rank", "alpha", "dropout", "rs_lora"});
    case StageKind::kEvaluate: return {"split"};
  }
  return {};
}

pruning::PruningStrategy strategy_from_params(const json& p, std::size_t max_len) {
  pruning::PruningStrategy s;
  s.kind = pruning::parse_strategy(get_or<std::string>(p, "strategy", "iterative", "prune"));
  s.target_removals = get_or<std::size_t>(p, "layers", 0, "prune");
  s.pool = pruning::parse_scope(get_or<std::string>(p, "pool", "decoder_only", "prune"));
  const auto kind = metrics::parse_metric_kind(get_or<std::string>(p, "metric", "chrf", "prune"));
  if (kind == metrics::MetricKind::kCustom) fail(ErrorKind::kConfig, "prune: custom metrics are not available in recipes");
  s.selection_metric = metrics::ScorerConfig::for_kind(kind);
  s.selection_metric.beta = get_or(p, "beta", s.selection_metric.beta, "prune");
  s.selection_metric.validate();
  s.max_len = max_len;
  return s;
}

lora::LoraConfig lora_from_params(const json& p) {
  lora::LoraConfig c;
  c.rank = get_or(p, "rank", c.rank, "qlora_finetune");
  c.alpha = get_or(p, "alpha", c.alpha, "qlora_finetune");
  c.dropout = get_or(p, "dropout", c.dropout, "qlora_finetune");
  c.rs_lora = get_or(p, "rs_lora", c.rs_lora, "qlora_finetune");
  lora::validate(c);
  return c;
}

quant::QuantizeOptions quant_from_params(const json& p) {
  quant::QuantizeOptions q;
  q.block_size = get_or(p, "block_size", q.block_size, "quantize");
  q.double_quant = get_or(p, "double_quant", q.double_quant, "quantize");
  q.dq_group = get_or(p, "dq_group", q.dq_group, "quantize");
  if (q.block_size == 0 || q.dq_group == 0) fail(ErrorKind::kConfig, "quantize: block_size and dq_group must be >= 1");
  return q;
}

std::string stage_label(const StageConfig& s, std::size_t i) {
  return "'" + s.name + "' (stage " + std::to_string(i) + ", " + stage_kind_name(s.kind) + ")";
}

}  // namespace

json RecipeConfig::to_json() const {
  json stages_json = json::array();
  for (const auto& s : stages) {
    stages_json.push_back({{"kind", stage_kind_name(s.kind)}, {"name", s.name}, {"params", s.params}});
  }
  return {{"name", name},
          {"seed", seed},
          {"output_dir", output_dir},
          {"report_path", report_path},
          {"data",
           {{"vocab_size", data.vocab_size},
            {"reorder_window", data.reorder_window},
            {"task_seed", data.task_seed},
            {"min_len", data.min_len},
            {"max_len", data.max_len},
            {"n", data.n},
            {"corpus_seed", data.corpus_seed},
            {"test_size", data.test_size},
            {"dev_size", data.dev_size},
            {"split_seed", data.split_seed},
            {"corpus_path", data.corpus_path},
            {"task_path", data.task_path}}},
          {"model", model_config_to_json(model)},
          {"eval_max_len", eval_max_len},
          {"storage_bf16", storage_bf16},
          {"importance_split", importance_split},
          {"stages", stages_json}};
}

RecipeConfig RecipeConfig::from_json(const json& j) {
  check_keys(j, {"name", "seed", "output_dir", "report_path", "data", "model", "eval_max_len", "storage_bf16",
                 "importance_split", "stages"},
             "recipe");
  RecipeConfig r;
  r.name = get_or(j, "name", r.name, "recipe");
  r.seed = get_or(j, "seed", r.seed, "recipe");
  r.output_dir = get_or(j, "output_dir", r.output_dir, "recipe");
  r.report_path = get_or(j, "report_path", r.report_path, "recipe");
  r.eval_max_len = get_or(j, "eval_max_len", r.eval_max_len, "recipe");
  r.storage_bf16 = get_or(j, "storage_bf16", r.storage_bf16, "recipe");
  r.importance_split = get_or(j, "importance_split", r.importance_split, "recipe");
  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, {"vocab_size", "reorder_window", "task_seed", "min_len", "max_len", "n", "corpus_seed", "test_size",
                   "dev_size", "split_seed", "corpus_path", "task_path"},
               "data");
    auto& o = r.data;
    o.vocab_size = get_or(d, "vocab_size", o.vocab_size, "data");
    o.reorder_window = get_or(d, "reorder_window", o.reorder_window, "data");
    o.task_seed = get_or(d, "task_seed", o.task_seed, "data");
    o.min_len = get_or(d, "min_len", o.min_len, "data");
    o.max_len = get_or(d, "max_len", o.max_len, "data");
    o.n = get_or(d, "n", o.n, "data");
    o.corpus_seed = get_or(d, "corpus_seed", o.corpus_seed, "data");
    o.test_size = get_or(d, "test_size", o.test_size, "data");
    o.dev_size = get_or(d, "dev_size", o.dev_size, "data");
    o.split_seed = get_or(d, "split_seed", o.split_seed, "data");
    o.corpus_path = get_or(d, "corpus_path", o.corpus_path, "data");
    o.task_path = get_or(d, "task_path", o.task_path, "data");
  }
  model::ModelConfig md;
  md.vocab_size = r.data.vocab_size;
  r.model = model_config_from_json(j.value("model", json::object()), md);
  if (j.contains("stages")) {
    if (!j.at("stages").is_array()) fail(ErrorKind::kConfig, "recipe: 'stages' must be an array");
    for (const auto& s : j.at("stages")) {
      check_keys(s, {"kind", "name", "params"}, "stage");
      StageConfig sc;
      if (!s.contains("kind")) fail(ErrorKind::kConfig, "stage: missing 'kind'");
      sc.kind = parse_stage_kind(s.at("kind").get<std::string>());
      sc.name = get_or<std::string>(s, "name", stage_kind_name(sc.kind), "stage");
      sc.params = s.value("params", json::object());
      r.stages.push_back(std::move(sc));
    }
  }
  r.validate();
  return r;
}

RecipeConfig RecipeConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::kConfig, "cannot open recipe '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, "recipe '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void RecipeConfig::validate() const {
  model::validate(model);
  if (model.vocab_size < data.vocab_size) fail(ErrorKind::kConfig, "model vocab_size is smaller than the task vocabulary");
  if (importance_split != "dev" && importance_split != "test") {
    fail(ErrorKind::kConfig, "importance_split must be 'dev' or 'test'");
  }
  if (eval_max_len < 1) fail(ErrorKind::kConfig, "eval_max_len must be >= 1");
  std::set<std::string> names;
  std::optional<std::size_t> first_train, quantize_at;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const StageConfig& s = stages[i];
    if (s.name.empty()) fail(ErrorKind::kConfig, "stage " + std::to_string(i) + " has an empty name");
    if (!names.insert(s.name).second) fail(ErrorKind::kConfig, "duplicate stage name '" + s.name + "'");
    check_keys(s.params, allowed_stage_keys(s.kind), "stage '" + s.name + "'");
    // Parse parameters now so bad values fail before any work is done.
    switch (s.kind) {
      case StageKind::kTrainFull:
      case StageKind::kFinetune: train_config_from_json(s.params); break;
      case StageKind::kPrune:
        strategy_from_params(s.params, eval_max_len);
        train_config_from_json(s.params);
        break;
      case StageKind::kQuantize: quant_from_params(s.params); break;
      case StageKind::kQloraFinetune:
        lora_from_params(s.params);
        train_config_from_json(s.params);
        break;
      case StageKind::kDistillAugment: {
        const auto dedup = get_or<std::string>(s.params, "dedup", "pair", s.name);
        if (dedup != "pair" && dedup != "target") fail(ErrorKind::kConfig, "stage '" + s.name + "': dedup must be pair or target");
        if (get_or<std::size_t>(s.params, "oversample", 1, s.name) < 1) {
          fail(ErrorKind::kConfig, "stage '" + s.name + "': oversample must be >= 1");
        }
        for (const auto& p : get_or<std::vector<std::string>>(s.params, "oversample_provenance", {}, s.name)) {
          data::parse_provenance(p);
        }
        break;
      }
      case StageKind::kEvaluate: {
        const auto split = get_or<std::string>(s.params, "split", "test", s.name);
        if (split != "test" && split != "dev" && split != "train") {
          fail(ErrorKind::kConfig, "stage '" + s.name + "': unknown split '" + split + "'");
        }
        break;
      }
    }
    // Stage order.
    if (s.kind == StageKind::kTrainFull) {
      if (quantize_at) {
        fail(ErrorKind::kConfig, "illegal stage order: " + stage_label(s, i) + " cannot follow " +
                                     stage_label(stages[*quantize_at], *quantize_at));
      }
      if (!first_train) first_train = i;
      continue;
    }
    if (!first_train) {
      fail(ErrorKind::kConfig, "illegal stage order: " + stage_label(s, i) + " must come after a train_full stage");
    }
    if (quantize_at && (s.kind == StageKind::kPrune || s.kind == StageKind::kFinetune || s.kind == StageKind::kQuantize)) {
      fail(ErrorKind::kConfig, "illegal stage order: " + stage_label(s, i) + " cannot follow " +
                                   stage_label(stages[*quantize_at], *quantize_at));
    }
    if (s.kind == StageKind::kQloraFinetune && !quantize_at) {
      fail(ErrorKind::kConfig, "illegal stage order: " + stage_label(s, i) + " must come after a quantize stage");
    }
    if (s.kind == StageKind::kQuantize) quantize_at = i;
  }
}

std::string RecipeConfig::fingerprint() const { return hex64(fnv1a64(to_json().dump())); }

// ---- scores and retention ----------------------------------------------------

json ScoreSet::to_json() const { return {{"bleu", bleu}, {"chrf", chrf}, {"chrf++", chrfpp}}; }

ScoreSet ScoreSet::from_json(const json& j) {
  return {j.value("bleu", 0.0), j.value("chrf", 0.0), j.value("chrf++", 0.0)};
}

Retention quality_retention(const ScoreSet& student, const ScoreSet& teacher) {
  auto ratio = [](double s, double t) -> std::optional<double> {
    if (t == 0.0) return std::nullopt;
    return std::max(0.0, s / t);
  };
  return {{"bleu", ratio(student.bleu, teacher.bleu)},
          {"chrf", ratio(student.chrf, teacher.chrf)},
          {"chrf++", ratio(student.chrfpp, teacher.chrfpp)}};
}

std::string format_retention(const std::optional<double>& r) {
  if (!r) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *r);
  return buf;
}

namespace {

json retention_json(const Retention& r) {
  json j = json::object();
  for (const auto& [k, v] : r) j[k] = v ? json(*v) : json(nullptr);
  return j;
}

Retention retention_from_json(const json& j) {
  Retention r;
  for (const auto& [k, v] : j.items()) r[k] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
  return r;
}

quant::StorageReport storage_from_json(const json& j) {
  quant::StorageReport s;
  s.dense_params = j.value("dense_params", std::uint64_t{0});
  s.dense_bytes = j.value("dense_bytes", std::uint64_t{0});
  s.nf4_params = j.value("nf4_params", std::uint64_t{0});
  s.nf4_code_bytes = j.value("nf4_code_bytes", std::uint64_t{0});
  s.nf4_scale_bytes = j.value("nf4_scale_bytes", std::uint64_t{0});
  s.adapter_params = j.value("adapter_params", std::uint64_t{0});
  s.adapter_bytes = j.value("adapter_bytes", std::uint64_t{0});
  s.total_bytes = j.value("total_bytes", std::uint64_t{0});
  s.bf16 = j.value("bf16", false);
  return s;
}

}  // namespace

json StageRecord::to_json() const {
  return {{"index", index},
          {"name", name},
          {"kind", stage_kind_name(kind)},
          {"status", status},
          {"error", error},
          {"fingerprint", fingerprint},
          {"checkpoint", checkpoint},
          {"scores", scores.to_json()},
          {"retention", retention_json(retention)},
          {"params", params},
          {"adapter_params", adapter_params},
          {"trainable_params", trainable_params},
          {"storage", storage.to_json()},
          {"storage_gb", quant::to_decimal_gb(storage.total_bytes)},
          {"encoder_layers", encoder_layers},
          {"decoder_layers", decoder_layers},
          {"train_corpus_size", train_corpus_size},
          {"final_loss", final_loss},
          {"wall_clock_s", wall_clock_s},
          {"details", details},
          {"notes", notes}};
}

StageRecord StageRecord::from_json(const json& j) {
  StageRecord r;
  try {
    r.index = j.at("index").get<std::size_t>();
    r.name = j.at("name").get<std::string>();
    r.kind = parse_stage_kind(j.at("kind").get<std::string>());
    r.status = j.at("status").get<std::string>();
    r.error = j.value("error", std::string());
    r.fingerprint = j.value("fingerprint", std::string());
    r.checkpoint = j.value("checkpoint", std::string());
    r.scores = ScoreSet::from_json(j.value("scores", json::object()));
    r.retention = retention_from_json(j.value("retention", json::object()));
    r.params = j.value("params", std::uint64_t{0});
    r.adapter_params = j.value("adapter_params", std::uint64_t{0});
    r.trainable_params = j.value("trainable_params", std::uint64_t{0});
    r.storage = storage_from_json(j.value("storage", json::object()));
    r.encoder_layers = j.value("encoder_layers", std::size_t{0});
    r.decoder_layers = j.value("decoder_layers", std::size_t{0});
    r.train_corpus_size = j.value("train_corpus_size", std::size_t{0});
    r.final_loss = j.value("final_loss", 0.0);
    r.wall_clock_s = j.value("wall_clock_s", 0.0);
    r.details = j.value("details", json::object());
    r.notes = j.value("notes", std::vector<std::string>{});
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorKind::kFormat, std::string("stage record: ") + e.what());
  }
  return r;
}

json ExperimentManifest::to_json() const {
  json st = json::array();
  for (const auto& s : stages) st.push_back(s.to_json());
  return {{"recipe_name", recipe_name}, {"recipe_fingerprint", recipe_fingerprint}, {"output_dir", output_dir},
          {"status", status},           {"teacher_stage", teacher_stage},           {"stages", st}};
}

ExperimentManifest ExperimentManifest::from_json(const json& j) {
  ExperimentManifest m;
  try {
    m.recipe_name = j.value("recipe_name", std::string());
    m.recipe_fingerprint = j.value("recipe_fingerprint", std::string());
    m.output_dir = j.value("output_dir", std::string());
    m.status = j.value("status", std::string("ok"));
    m.teacher_stage = j.value("teacher_stage", std::string());
    for (const auto& s : j.at("stages")) m.stages.push_back(StageRecord::from_json(s));
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("manifest: ") + e.what());
  }
  return m;
}

ExperimentManifest ExperimentManifest::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::kIo, "cannot open manifest '" + path + "'");
  try {
    return from_json(json::parse(is));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kFormat, "manifest '" + path + "': " + e.what());
  }
}

json ExperimentManifest::metric_values() const {
  json j = json::array();
  for (const auto& s : stages) {
    j.push_back({{"name", s.name}, {"scores", s.scores.to_json()},
                 {"retention", retention_json(s.retention)}, {"params", s.params},
                 {"storage_bytes", s.storage.total_bytes}, {"final_loss", s.final_loss}});
  }
  return j;
}

// ---- execution ------------------------------------------------------------------

namespace {

struct RunState {
  data::ParallelCorpus corpus;
  std::optional<data::TaskSpec> task;
  std::vector<data::Segment> train;
  std::optional<model::TransformerModel> model;
  std::optional<model::TransformerModel> teacher;
  std::optional<ScoreSet> teacher_scores;
  std::string teacher_stage;
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) fail(ErrorKind::kIo, "cannot write '" + p.string() + "'");
  os << text;
}

void prepare_data(const RecipeConfig& rc, RunState& st) {
  const DataConfig& d = rc.data;
  if (!d.task_path.empty()) {
    std::ifstream is(d.task_path);
    if (!is) fail(ErrorKind::kConfig, "cannot open task file '" + d.task_path + "'");
    try {
      st.task = data::TaskSpec::from_json(json::parse(is));
    } catch (const json::parse_error& e) {
      fail(ErrorKind::kConfig, "task file '" + d.task_path + "': " + e.what());
    }
  }
  if (!d.corpus_path.empty()) {
    st.corpus = data::load_jsonl(d.corpus_path);
    if (st.corpus.splits.empty()) st.corpus = data::train_test_split(st.corpus, d.test_size, d.split_seed, d.dev_size);
  } else {
    if (!st.task) {
      data::TaskSpec t = data::TaskSpec::make(d.vocab_size, d.reorder_window, d.task_seed);
      t.min_len = d.min_len;
      t.max_len = d.max_len;
      t.validate();
      st.task = t;
    }
    st.corpus = data::train_test_split(data::gen_corpus(*st.task, d.n, d.corpus_seed), d.test_size, d.split_seed, d.dev_size);
  }
  for (const char* s : {"train", "test"}) {
    if (!st.corpus.has_split(s) || st.corpus.splits.at(s).empty()) {
      fail(ErrorKind::kConfig, std::string("corpus has no '") + s + "' split");
    }
  }
  st.train = st.corpus.split("train");
}

ScoreSet evaluate_scores(const model::TransformerModel& m, const std::vector<data::Segment>& segs, std::size_t max_len) {
  std::vector<std::string> hyps, refs;
  for (const auto& s : segs) {
    auto out = m.greedy_decode(s.source, max_len);
    if (!out.empty() && out.back() == model::kEos) out.pop_back();
    hyps.push_back(data::render(out));
    refs.push_back(data::render(s.target));
  }
  ScoreSet r;
  r.bleu = metrics::bleu(hyps, refs).score;
  r.chrf = metrics::chrf(hyps, refs).score;
  r.chrfpp = metrics::chrf(hyps, refs, metrics::ScorerConfig::for_kind(metrics::MetricKind::kChrfPlusPlus)).score;
  return r;
}

void require_model(const RunState& st, const StageConfig& s) {
  if (!st.model) fail(ErrorKind::kStage, "stage '" + s.name + "' has no model to work on");
}

// Executes one stage on the run state and fills in the stage-specific parts
// of its record.
void execute_stage(const RecipeConfig& rc, const StageConfig& s, std::size_t index, RunState& st, StageRecord& rec) {
  const std::uint64_t stage_seed = rc.seed * 1000003ULL + index;
  switch (s.kind) {
    case StageKind::kTrainFull:
    case StageKind::kFinetune: {
      if (!st.model) {
        Rng init(rc.seed);
        st.model = model::TransformerModel::build(rc.model, init);
      }
      model::TrainConfig tc = train_config_from_json(s.params);
      tc.seed = stage_seed;
      const auto res = model::train_full(*st.model, data::to_examples(st.train), tc);
      rec.final_loss = res.loss_curve.empty() ? 0.0 : res.loss_curve.back();
      rec.details["steps"] = res.steps;
      break;
    }
    case StageKind::kPrune: {
      require_model(st, s);
      const auto strategy = strategy_from_params(s.params, rc.eval_max_len);
      const auto devset = st.corpus.split(rc.importance_split);
      if (devset.empty() && strategy.kind != pruning::StrategyKind::kMiddle) {
        fail(ErrorKind::kStage, "importance split '" + rc.importance_split + "' is empty");
      }
      model::TrainConfig tc = train_config_from_json(s.params);
      tc.seed = stage_seed;
      const auto examples = data::to_examples(st.train);
      auto res = pruning::prune(*st.model, strategy, devset, &tc, &examples);
      st.model = std::move(res.model);
      rec.details["plan"] = res.plan.to_json();
      break;
    }
    case StageKind::kDistillAugment: {
      require_model(st, s);
      if (!st.teacher) fail(ErrorKind::kStage, "distill_augment needs a teacher from a train_full stage");
      const std::size_t max_len = get_or<std::size_t>(s.params, "max_len", rc.eval_max_len, s.name);
      std::vector<data::Segment> authentic;
      for (const auto& seg : st.train) {
        if (seg.provenance == data::Provenance::kAuthentic) authentic.push_back(seg);
      }
      const auto distilled = distill::generate_kd(*st.teacher, data::sources(authentic), max_len);
      const auto key = get_or<std::string>(s.params, "dedup", "pair", s.name) == "pair" ? data::DedupKey::kPair
                                                                                        : data::DedupKey::kTarget;
      data::ParallelCorpus aug = distill::augment(authentic, distilled, key);
      const std::size_t augmented = aug.size();
      std::vector<data::Provenance> filter;
      for (const auto& p : get_or<std::vector<std::string>>(s.params, "oversample_provenance", {"authentic", "distilled"}, s.name)) {
        filter.push_back(data::parse_provenance(p));
      }
      const std::size_t factor = get_or<std::size_t>(s.params, "oversample", 1, s.name);
      aug = distill::oversample(aug, filter, factor);
      const std::size_t ood_n = get_or<std::size_t>(s.params, "ood_n", 0, s.name);
      if (ood_n > 0) {
        if (!st.task) fail(ErrorKind::kStage, "out-of-domain data needs a task definition (data.task_path)");
        const auto ood = data::gen_ood_corpus(*st.task, ood_n, get_or<std::uint64_t>(s.params, "ood_seed", rc.seed + 7, s.name));
        aug.segments.insert(aug.segments.end(), ood.segments.begin(), ood.segments.end());
      }
      if (get_or(s.params, "shuffle", true, s.name)) aug = distill::shuffled(aug, stage_seed);
      st.train = aug.segments;
      rec.details["authentic"] = authentic.size();
      rec.details["distilled"] = distilled.size();
      rec.details["augmented"] = augmented;
      rec.details["oversample"] = factor;
      rec.details["ood"] = ood_n;
      break;
    }
    case StageKind::kQuantize: {
      require_model(st, s);
      quant::quantize_model(*st.model, quant_from_params(s.params));
      break;
    }
    case StageKind::kQloraFinetune: {
      require_model(st, s);
      if (!st.model->has_adapters()) {
        Rng lrng(stage_seed ^ 0x6c6f7261ULL);
        lora::attach_adapters(*st.model, lora_from_params(s.params), lrng);
      }
      model::TrainConfig tc = train_config_from_json(s.params);
      tc.seed = stage_seed;
      const auto res = lora::qlora_finetune(*st.model, data::to_examples(st.train), tc);
      rec.final_loss = res.train.loss_curve.empty() ? 0.0 : res.train.loss_curve.back();
      rec.details["steps"] = res.train.steps;
      rec.notes.insert(rec.notes.end(), res.notes.begin(), res.notes.end());
      rec.notes.push_back(
          "params are logical counts (quantized matrices count every element); storage reflects 4-bit packing");
      break;
    }
    case StageKind::kEvaluate: require_model(st, s); break;
  }
}

std::string stage_file_stem(std::size_t index, const std::string& name) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02zu_", index);
  std::string safe;
  for (char c : name) safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return buf + safe;
}

}  // namespace

ExperimentManifest run_recipe(const RecipeConfig& rc, const RunOptions& opt) {
  rc.validate();
  ExperimentManifest man;
  man.recipe_name = rc.name;
  man.recipe_fingerprint = rc.fingerprint();
  man.output_dir = rc.output_dir;

  const fs::path out_dir(rc.output_dir);
  const fs::path stage_dir = out_dir / "stages";
  std::error_code ec;
  fs::create_directories(stage_dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create '" + stage_dir.string() + "': " + ec.message());

  auto write_manifest = [&] {
    write_file(out_dir / "manifest.json", man.to_json().dump(2) + "\n");
    if (!rc.report_path.empty()) write_file(rc.report_path, render_report(man).text);
  };

  RunState st;
  if (!rc.stages.empty()) {
    try {
      prepare_data(rc, st);
    } catch (const Error& e) {
      fail(ErrorKind::kConfig, std::string("data: ") + e.what());
    }
  }

  json base = rc.to_json();
  base.erase("stages");
  base.erase("output_dir");
  base.erase("report_path");
  std::uint64_t chain = fnv1a64(base.dump());
  bool reuse = !opt.force;
  const quant::StorageOptions storage_opts{rc.storage_bf16};

  for (std::size_t i = 0; i < rc.stages.size(); ++i) {
    const StageConfig& s = rc.stages[i];
    chain = fnv1a64(json({{"kind", stage_kind_name(s.kind)}, {"name", s.name}, {"params", s.params}}).dump(), chain);
    const std::string fp = hex64(chain);
    const std::string stem = stage_file_stem(i, s.name);
    const fs::path ckpt = stage_dir / (stem + ".pkpt");
    const fs::path rec_path = stage_dir / (stem + ".json");
    const fs::path corpus_path = stage_dir / (stem + ".train.jsonl");

    // Reuse a stored result with the same fingerprint.
    if (reuse && fs::exists(rec_path) && fs::exists(ckpt)) {
      try {
        std::ifstream is(rec_path);
        StageRecord prev = StageRecord::from_json(json::parse(is));
        const bool corpus_ok = s.kind != StageKind::kDistillAugment || fs::exists(corpus_path);
        if (prev.fingerprint == fp && (prev.status == "ok" || prev.status == "cached") && corpus_ok) {
          st.model = model::load_checkpoint(ckpt.string()).model;
          if (s.kind == StageKind::kDistillAugment) st.train = data::load_jsonl(corpus_path.string()).segments;
          if (s.kind == StageKind::kTrainFull && !st.teacher) {
            st.teacher = st.model->clone();
            st.teacher_scores = prev.scores;
            st.teacher_stage = s.name;
            man.teacher_stage = s.name;
          }
          prev.status = "cached";
          if (opt.verbose) std::cerr << "[prunekit] stage " << s.name << ": cached\n";
          man.stages.push_back(prev);
          continue;
        }
      } catch (const std::exception&) {
        // Unreadable cache entries are recomputed.
      }
    }
    reuse = false;

    StageRecord rec;
    rec.index = i;
    rec.name = s.name;
    rec.kind = s.kind;
    rec.fingerprint = fp;
    if (opt.verbose) std::cerr << "[prunekit] stage " << s.name << " (" << stage_kind_name(s.kind) << ")\n";
    const auto t0 = std::chrono::steady_clock::now();
    try {
      execute_stage(rc, s, i, st, rec);
      if (s.kind == StageKind::kTrainFull && !st.teacher) {
        st.teacher = st.model->clone();
        st.teacher_stage = s.name;
        man.teacher_stage = s.name;
      }
      const model::TransformerModel& m = *st.model;
      rec.scores = evaluate_scores(m, st.corpus.split(s.kind == StageKind::kEvaluate
                                                          ? get_or<std::string>(s.params, "split", "test", s.name)
                                                          : "test"),
                                   rc.eval_max_len);
      if (s.name == st.teacher_stage && !st.teacher_scores) st.teacher_scores = rec.scores;
      rec.params = m.param_count();
      rec.adapter_params = m.adapter_param_count();
      rec.trainable_params = m.trainable_param_count();
      rec.storage = quant::storage_bytes(m, storage_opts);
      rec.encoder_layers = m.depth(model::Pool::kEncoder);
      rec.decoder_layers = m.depth(model::Pool::kDecoder);
      rec.train_corpus_size = st.train.size();
      json meta = {{"stage", s.name}, {"kind", stage_kind_name(s.kind)}, {"seed", rc.seed}, {"fingerprint", fp}};
      if (rec.details.contains("plan")) meta["pruning_plan"] = rec.details["plan"];
      model::save_checkpoint(m, ckpt.string(), meta);
      if (s.kind == StageKind::kDistillAugment) {
        data::ParallelCorpus c;
        c.segments = st.train;
        data::save_jsonl(c, corpus_path.string());
      }
      rec.checkpoint = ckpt.string();
      rec.status = "ok";
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      man.status = "failed";
    }
    rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (st.teacher_scores && rec.status == "ok") rec.retention = quality_retention(rec.scores, *st.teacher_scores);
    write_file(rec_path, rec.to_json().dump(2) + "\n");
    man.stages.push_back(std::move(rec));
    if (!man.ok()) break;
  }
  write_manifest();
  return man;
}

std::vector<ExperimentManifest> run_ood_sweep(const RecipeConfig& config, const std::vector<std::size_t>& ood_sizes,
                                              const RunOptions& options) {
  bool has_distill = false;
  for (const auto& s : config.stages) has_distill |= s.kind == StageKind::kDistillAugment;
  if (!has_distill) fail(ErrorKind::kConfig, "out-of-domain sweep needs a distill_augment stage");
  std::vector<ExperimentManifest> out;
  for (std::size_t n : ood_sizes) {
    RecipeConfig rc = config;
    rc.name = config.name + "_ood" + std::to_string(n);
    rc.output_dir = (fs::path(config.output_dir) / ("ood_" + std::to_string(n))).string();
    rc.report_path.clear();
    for (auto& s : rc.stages) {
      if (s.kind == StageKind::kDistillAugment) s.params["ood_n"] = n;
    }
    out.push_back(run_recipe(rc, options));
    if (!out.back().ok()) break;
  }
  return out;
}

// ---- built-in toy recipes ------------------------------------------------------

namespace {

RecipeConfig toy_base(const std::string& name, std::uint64_t seed) {
  RecipeConfig r;
  r.name = name;
  r.seed = seed;
  r.output_dir = name + "_seed" + std::to_string(seed);
  r.data.corpus_seed = seed + 1;
  r.data.split_seed = seed;
  r.model.vocab_size = r.data.vocab_size;
  r.model.d_model = 32;
  r.model.n_heads = 4;
  r.model.d_ff = 64;
  r.model.encoder_layers = 2;
  r.model.decoder_layers = 8;
  r.model.max_positions = 32;
  return r;
}

StageConfig stage(StageKind k, json params, std::string name = {}) {
  return {k, name.empty() ? stage_kind_name(k) : std::move(name), std::move(params)};
}

}  // namespace

RecipeConfig setup1_recipe(std::uint64_t seed) {
  RecipeConfig r = toy_base("setup1", seed);
  r.stages = {
      stage(StageKind::kTrainFull, {{"epochs", 6}, {"batch_size", 4}, {"lr", 1e-3}, {"weight_decay", 0.001}}),
      stage(StageKind::kDistillAugment, {{"dedup", "pair"}}),
      stage(StageKind::kQuantize, {{"block_size", 64}, {"double_quant", true}}),
      stage(StageKind::kQloraFinetune,
            {{"rank", 8}, {"alpha", 16.0}, {"rs_lora", true}, {"epochs", 2}, {"batch_size", 4}, {"lr", 1e-3}}),
      stage(StageKind::kEvaluate, {{"split", "test"}}),
  };
  r.validate();
  return r;
}

RecipeConfig setup2_recipe(std::uint64_t seed) {
  RecipeConfig r = toy_base("setup2", seed);
  r.stages = {
      stage(StageKind::kTrainFull, {{"epochs", 6}, {"batch_size", 4}, {"lr", 1e-3}, {"weight_decay", 0.001}}),
      stage(StageKind::kPrune, {{"strategy", "iterative"}, {"layers", 2}, {"pool", "decoder_only"}, {"metric", "chrf"}}),
      stage(StageKind::kFinetune, {{"epochs", 4}, {"batch_size", 4}, {"lr", 1e-3}, {"weight_decay", 0.001}}),
      stage(StageKind::kDistillAugment, {{"dedup", "pair"}, {"oversample", 10}, {"ood_n", 500}}),
      stage(StageKind::kQuantize, {{"block_size", 64}, {"double_quant", true}}),
      stage(StageKind::kQloraFinetune,
            {{"rank", 8}, {"alpha", 16.0}, {"rs_lora", true}, {"epochs", 1}, {"batch_size", 8}, {"lr", 5e-4}}),
      stage(StageKind::kEvaluate, {{"split", "test"}}),
  };
  r.validate();
  return r;
}

}  // namespace prunekit::pipeline
