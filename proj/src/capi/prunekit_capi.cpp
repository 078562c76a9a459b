// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "prunekit/prunekit.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "common.hpp"
#include "data/corpus.hpp"
#include "distill/distill.hpp"
#include "json.hpp"
#include "lora/lora.hpp"
#include "metrics/metrics.hpp"
#include "model/checkpoint.hpp"
#include "pipeline/recipe.hpp"
#include "pipeline/report.hpp"
#include "pruning/pruning.hpp"
#include "quant/quantize_model.hpp"
#include "quant/storage.hpp"

using nlohmann::json;
using namespace prunekit;

struct pk_model {
  model::TransformerModel model;
};

struct pk_corpus {
  data::ParallelCorpus corpus;
};

namespace {

thread_local std::string g_last_error;

pk_status to_status(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig: return PK_ERR_CONFIG;
    case ErrorKind::kArgument: return PK_ERR_ARGUMENT;
    case ErrorKind::kDimension: return PK_ERR_DIMENSION;
    case ErrorKind::kNumeric: return PK_ERR_NUMERIC;
    case ErrorKind::kFormat: return PK_ERR_FORMAT;
    case ErrorKind::kNotFound: return PK_ERR_NOT_FOUND;
    case ErrorKind::kRefused: return PK_ERR_REFUSED;
    case ErrorKind::kSequenceLength: return PK_ERR_SEQUENCE_LENGTH;
    case ErrorKind::kIo: return PK_ERR_IO;
    case ErrorKind::kStage: return PK_ERR_STAGE;
  }
  return PK_ERR_INTERNAL;
}

template <class F>
pk_status guarded(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return PK_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.kind());
  } catch (const json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return PK_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PK_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return PK_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

json parse_opts(const char* text) {
  if (!text || !*text) return json::object();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kConfig, std::string("invalid JSON options: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::kConfig, "options must be a JSON object");
  return j;
}

void need(const void* p, const char* what) {
  if (!p) fail(ErrorKind::kArgument, std::string(what) + " must not be null");
}

std::vector<data::Segment> split_of(const pk_corpus* c, const char* split) {
  return c->corpus.split(split ? split : "");
}

}  // namespace

extern "C" {

const char* pk_version(void) { return "0.1.0"; }

const char* pk_status_name(pk_status s) {
  switch (s) {
    case PK_OK: return "ok";
    case PK_ERR_CONFIG: return "config error";
    case PK_ERR_ARGUMENT: return "argument error";
    case PK_ERR_DIMENSION: return "dimension error";
    case PK_ERR_NUMERIC: return "numeric error";
    case PK_ERR_FORMAT: return "format error";
    case PK_ERR_NOT_FOUND: return "not found";
    case PK_ERR_REFUSED: return "refused";
    case PK_ERR_SEQUENCE_LENGTH: return "sequence length error";
    case PK_ERR_IO: return "io error";
    case PK_ERR_STAGE: return "stage failure";
    case PK_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

const char* pk_last_error(void) { return g_last_error.c_str(); }

void pk_string_free(char* s) { std::free(s); }

pk_status pk_score(const char* scorer_json, const char* const* hyps, const char* const* refs, size_t n,
                   char** report_json) {
  return guarded([&] {
    if (n > 0) {
      need(hyps, "hyps");
      need(refs, "refs");
    }
    const json opts = parse_opts(scorer_json);
    const auto kind = metrics::parse_metric_kind(opts.value("kind", std::string("chrf")));
    if (kind == metrics::MetricKind::kCustom) fail(ErrorKind::kConfig, "custom scorers are not available here");
    json cfg = metrics::ScorerConfig::for_kind(kind).to_json();
    cfg.update(opts);
    const metrics::Scorer scorer(metrics::ScorerConfig::from_json(cfg));
    std::vector<std::string> h(hyps, hyps + n), r(refs, refs + n);
    put(report_json, scorer.report(h, r).to_json().dump());
  });
}

pk_status pk_gen_data(const char* options_json, const char* out_dir, char** summary_json) {
  return guarded([&] {
    need(out_dir, "out_dir");
    const json o = parse_opts(options_json);
    const std::string task = o.value("task", std::string("cipher"));
    if (task != "cipher" && task != "copy") fail(ErrorKind::kConfig, "unknown task '" + task + "'");
    const std::uint64_t seed = o.value("seed", std::uint64_t{0});
    data::TaskSpec spec = data::TaskSpec::make(o.value("vocab_size", std::size_t{40}), o.value("window", std::size_t{3}),
                                               o.value("task_seed", seed), task == "copy");
    spec.min_len = o.value("min_len", spec.min_len);
    spec.max_len = o.value("max_len", spec.max_len);
    spec.ood_overlap = o.value("ood_overlap", spec.ood_overlap);
    spec.validate();
    const std::size_t n = o.value("n", std::size_t{884});
    auto corpus = data::gen_corpus(spec, n, seed + 1);
    corpus = data::train_test_split(corpus, o.value("test_size", std::size_t{100}), seed, o.value("dev_size", std::size_t{50}));
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    {
      std::ofstream os(dir / "task.json");
      if (!os) fail(ErrorKind::kIo, "cannot write task.json");
      os << spec.to_json().dump(2) << "\n";
    }
    data::save_jsonl(corpus, (dir / "corpus.jsonl").string());
    json summary = {{"task", (dir / "task.json").string()},
                    {"corpus", (dir / "corpus.jsonl").string()},
                    {"segments", corpus.size()},
                    {"train", corpus.splits["train"].size()},
                    {"dev", corpus.splits["dev"].size()},
                    {"test", corpus.splits["test"].size()}};
    const std::size_t ood_n = o.value("ood_n", std::size_t{0});
    if (ood_n > 0) {
      data::save_jsonl(data::gen_ood_corpus(spec, ood_n, seed + 2), (dir / "ood.jsonl").string());
      summary["ood"] = (dir / "ood.jsonl").string();
      summary["ood_segments"] = ood_n;
    }
    put(summary_json, summary.dump());
  });
}

pk_status pk_corpus_load(const char* path, pk_corpus** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new pk_corpus{data::load_jsonl(path)};
  });
}

pk_status pk_corpus_save(const pk_corpus* corpus, const char* path) {
  return guarded([&] {
    need(corpus, "corpus");
    need(path, "path");
    data::save_jsonl(corpus->corpus, path);
  });
}

size_t pk_corpus_size(const pk_corpus* corpus) { return corpus ? corpus->corpus.size() : 0; }

void pk_corpus_free(pk_corpus* corpus) { delete corpus; }

pk_status pk_model_build(const char* config_json, unsigned long long seed, pk_model** out) {
  return guarded([&] {
    need(out, "out");
    const auto cfg = pipeline::model_config_from_json(parse_opts(config_json));
    Rng rng(seed);
    *out = new pk_model{model::TransformerModel::build(cfg, rng)};
  });
}

pk_status pk_model_load(const char* path, pk_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new pk_model{model::load_checkpoint(path).model};
  });
}

pk_status pk_model_save(const pk_model* m, const char* path, const char* metadata_json) {
  return guarded([&] {
    need(m, "model");
    need(path, "path");
    model::save_checkpoint(m->model, path, parse_opts(metadata_json));
  });
}

void pk_model_free(pk_model* m) { delete m; }

pk_status pk_model_info(const pk_model* m, int bf16_storage, char** info_json) {
  return guarded([&] {
    need(m, "model");
    const auto& mm = m->model;
    json layers = json::object();
    for (auto pool : {model::Pool::kEncoder, model::Pool::kDecoder}) {
      json ids = json::array();
      for (const auto& id : mm.layer_ids(pool)) ids.push_back(id.original_index);
      layers[model::pool_name(pool)] = ids;
    }
    const auto storage = quant::storage_bytes(mm, {bf16_storage != 0});
    json info = {{"config", pipeline::model_config_to_json(mm.config())},
                 {"layers", layers},
                 {"params", mm.param_count()},
                 {"adapter_params", mm.adapter_param_count()},
                 {"trainable_params", mm.trainable_param_count()},
                 {"quantized", mm.any_quantized()},
                 {"storage", storage.to_json()},
                 {"storage_gb", quant::format_gb(storage.total_bytes)}};
    put(info_json, info.dump());
  });
}

pk_status pk_model_decode(const pk_model* m, const int* source, size_t source_len, size_t max_len, int* out,
                          size_t capacity, size_t* out_len) {
  return guarded([&] {
    need(m, "model");
    if (source_len > 0) need(source, "source");
    if (max_len < 1) fail(ErrorKind::kArgument, "max_len must be >= 1");
    const auto res = m->model.greedy_decode(std::span<const int>(source, source_len), max_len);
    for (size_t i = 0; i < res.size() && i < capacity; ++i) out[i] = res[i];
    if (out_len) *out_len = res.size();
  });
}

pk_status pk_model_train(pk_model* m, const pk_corpus* c, const char* split, const char* train_json,
                         char** result_json) {
  return guarded([&] {
    need(m, "model");
    need(c, "corpus");
    const json o = parse_opts(train_json);
    json tc_json = o;
    tc_json.erase("seed");
    model::TrainConfig tc = pipeline::train_config_from_json(tc_json);
    tc.seed = o.value("seed", std::uint64_t{0});
    const auto res = model::train_full(m->model, data::to_examples(split_of(c, split)), tc);
    put(result_json, json({{"steps", res.steps}, {"loss_curve", res.loss_curve}}).dump());
  });
}

pk_status pk_model_evaluate(const pk_model* m, const pk_corpus* c, const char* split, size_t max_len,
                            char** scores_json) {
  return guarded([&] {
    need(m, "model");
    need(c, "corpus");
    const auto segs = split_of(c, split);
    if (segs.empty()) fail(ErrorKind::kArgument, "evaluation split is empty");
    std::vector<std::string> hyps, refs;
    for (const auto& s : segs) {
      auto out = m->model.greedy_decode(s.source, max_len ? max_len : model::kDefaultMaxDecode);
      if (!out.empty() && out.back() == model::kEos) out.pop_back();
      hyps.push_back(data::render(out));
      refs.push_back(data::render(s.target));
    }
    const json j = {{"bleu", metrics::bleu(hyps, refs).score},
                    {"chrf", metrics::chrf(hyps, refs).score},
                    {"chrf++", metrics::chrf(hyps, refs, metrics::ScorerConfig::for_kind(metrics::MetricKind::kChrfPlusPlus)).score},
                    {"segments", segs.size()}};
    put(scores_json, j.dump());
  });
}

pk_status pk_model_prune(pk_model* m, const pk_corpus* c, const char* strategy_json, char** plan_json) {
  return guarded([&] {
    need(m, "model");
    const json o = parse_opts(strategy_json);
    pruning::PruningStrategy s;
    s.kind = pruning::parse_strategy(o.value("strategy", std::string("iterative")));
    s.target_removals = o.value("layers", std::size_t{0});
    s.pool = pruning::parse_scope(o.value("pool", std::string("decoder_only")));
    const auto kind = metrics::parse_metric_kind(o.value("metric", std::string("chrf")));
    s.selection_metric = metrics::ScorerConfig::for_kind(kind);
    s.selection_metric.beta = o.value("beta", s.selection_metric.beta);
    s.max_len = o.value("max_len", model::kDefaultMaxDecode);
    std::vector<data::Segment> dev;
    std::vector<model::TrainExample> train;
    if (s.kind != pruning::StrategyKind::kMiddle) {
      need(c, "corpus");
      dev = c->corpus.split(o.value("dev_split", std::string("dev")));
      train = data::to_examples(c->corpus.split(o.value("train_split", std::string("train"))));
    }
    json tj = json::object();
    for (const char* k : {"epochs", "batch_size", "lr", "weight_decay", "max_grad_norm", "shuffle"}) {
      if (o.contains(k)) tj[k] = o[k];
    }
    model::TrainConfig tc = pipeline::train_config_from_json(tj);
    tc.seed = o.value("seed", std::uint64_t{0});
    auto res = pruning::prune(m->model, s, dev, &tc, &train);
    m->model = std::move(res.model);
    put(plan_json, res.plan.to_json().dump());
  });
}

pk_status pk_model_quantize(pk_model* m, const char* options_json) {
  return guarded([&] {
    need(m, "model");
    const json o = parse_opts(options_json);
    quant::QuantizeOptions q;
    q.block_size = o.value("block_size", q.block_size);
    q.double_quant = o.value("double_quant", q.double_quant);
    q.dq_group = o.value("dq_group", q.dq_group);
    if (q.block_size == 0 || q.dq_group == 0) fail(ErrorKind::kConfig, "block_size and dq_group must be >= 1");
    quant::quantize_model(m->model, q);
  });
}

pk_status pk_model_attach_lora(pk_model* m, const char* lora_json, unsigned long long seed) {
  return guarded([&] {
    need(m, "model");
    const json o = parse_opts(lora_json);
    lora::LoraConfig c;
    c.rank = o.value("rank", c.rank);
    c.alpha = o.value("alpha", c.alpha);
    c.dropout = o.value("dropout", c.dropout);
    c.rs_lora = o.value("rs_lora", c.rs_lora);
    lora::validate(c);
    Rng rng(seed);
    lora::attach_adapters(m->model, c, rng);
  });
}

pk_status pk_checkpoint_storage(const char* path, int bf16_storage, char** report_json) {
  return guarded([&] {
    need(path, "path");
    const auto r = quant::storage_bytes(std::string(path), {bf16_storage != 0});
    json j = r.to_json();
    j["storage_gb"] = quant::format_gb(r.total_bytes);
    put(report_json, j.dump());
  });
}

pk_status pk_distill(const pk_model* teacher, const pk_corpus* c, const char* options_json, pk_corpus** out,
                     char** summary_json) {
  return guarded([&] {
    need(teacher, "teacher");
    need(c, "corpus");
    need(out, "out");
    const json o = parse_opts(options_json);
    const std::string split = o.value("split", std::string("train"));
    const auto authentic = c->corpus.split(c->corpus.has_split(split) ? split : "");
    const auto distilled =
        distill::generate_kd(teacher->model, data::sources(authentic), o.value("max_len", model::kDefaultMaxDecode));
    const std::string dedup = o.value("dedup", std::string("pair"));
    if (dedup != "pair" && dedup != "target") fail(ErrorKind::kConfig, "dedup must be pair or target");
    auto aug = distill::augment(authentic, distilled, dedup == "pair" ? data::DedupKey::kPair : data::DedupKey::kTarget);
    const std::size_t augmented = aug.size();
    aug = distill::oversample(aug, {data::Provenance::kAuthentic, data::Provenance::kDistilled},
                              o.value("oversample", std::size_t{1}));
    put(summary_json, json({{"authentic", authentic.size()},
                            {"distilled", distilled.size()},
                            {"augmented", augmented},
                            {"output", aug.size()}})
                          .dump());
    *out = new pk_corpus{std::move(aug)};
  });
}

pk_status pk_builtin_recipe(const char* name, unsigned long long seed, char** recipe_json) {
  return guarded([&] {
    need(name, "name");
    const std::string n(name);
    pipeline::RecipeConfig r;
    if (n == "setup1") {
      r = pipeline::setup1_recipe(seed);
    } else if (n == "setup2") {
      r = pipeline::setup2_recipe(seed);
    } else {
      fail(ErrorKind::kConfig, "unknown built-in recipe '" + n + "' (expected setup1 or setup2)");
    }
    put(recipe_json, r.to_json().dump(2));
  });
}

pk_status pk_run_recipe(const char* recipe_json, int force, int verbose, char** manifest_json) {
  pk_status st = PK_OK;
  std::string stage_error;
  const pk_status rc = guarded([&] {
    need(recipe_json, "recipe_json");
    json j;
    try {
      j = json::parse(recipe_json);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::kConfig, std::string("recipe is not valid JSON: ") + e.what());
    }
    const auto recipe = pipeline::RecipeConfig::from_json(j);
    const auto man = pipeline::run_recipe(recipe, {force != 0, verbose != 0});
    put(manifest_json, man.to_json().dump(2));
    if (!man.ok()) {
      for (const auto& s : man.stages) {
        if (s.status == "failed") stage_error = "stage '" + s.name + "' failed: " + s.error;
      }
      st = PK_ERR_STAGE;
    }
  });
  if (rc != PK_OK) return rc;
  if (st != PK_OK) g_last_error = stage_error;
  return st;
}

pk_status pk_run_ood_sweep(const char* recipe_json, const size_t* sizes, size_t n_sizes, int force,
                           char** manifests_json) {
  pk_status st = PK_OK;
  std::string stage_error;
  const pk_status rc = guarded([&] {
    need(recipe_json, "recipe_json");
    if (n_sizes > 0) need(sizes, "sizes");
    const auto recipe = pipeline::RecipeConfig::from_json(json::parse(recipe_json));
    const auto mans = pipeline::run_ood_sweep(recipe, std::vector<std::size_t>(sizes, sizes + n_sizes), {force != 0, false});
    json arr = json::array();
    for (const auto& m : mans) {
      arr.push_back(m.to_json());
      if (!m.ok()) {
        st = PK_ERR_STAGE;
        stage_error = "sweep run '" + m.recipe_name + "' failed";
      }
    }
    put(manifests_json, arr.dump(2));
  });
  if (rc != PK_OK) return rc;
  if (st != PK_OK) g_last_error = stage_error;
  return st;
}

pk_status pk_render_report(const char* manifest_path, char** text, char** report_json) {
  return guarded([&] {
    need(manifest_path, "manifest_path");
    const auto r = pipeline::render_report(pipeline::ExperimentManifest::load(manifest_path));
    put(text, r.text);
    put(report_json, r.json.dump(2));
  });
}

}  // extern "C"
