// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "prunekit/prunekit.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Takes ownership of a library string.
json take_json(char* s) {
  REQUIRE(s != nullptr);
  json j = json::parse(s);
  pk_string_free(s);
  return j;
}

std::string temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("pk_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

const char* kTinyModel =
    R"({"vocab_size": 16, "d_model": 16, "n_heads": 2, "d_ff": 32, "encoder_layers": 1, "decoder_layers": 4,
        "max_positions": 16})";

}  // namespace

TEST_CASE("version, status names, last error") {
  CHECK(std::string(pk_version()) == "0.1.0");
  CHECK(std::string(pk_status_name(PK_OK)) == "ok");
  CHECK(std::string(pk_status_name(PK_ERR_FORMAT)) == "format error");
  pk_model* m = nullptr;
  CHECK(pk_model_build("{\"encoder_layers\": 0}", 1, &m) == PK_ERR_CONFIG);
  CHECK(m == nullptr);
  CHECK(std::string(pk_last_error()).find("encoder_layers") != std::string::npos);
  CHECK(pk_model_build("not json", 1, &m) == PK_ERR_CONFIG);
  CHECK(pk_model_build(kTinyModel, 1, &m) == PK_OK);
  CHECK(std::string(pk_last_error()).empty());
  pk_model_free(m);
  CHECK(pk_model_build(kTinyModel, 1, nullptr) == PK_ERR_ARGUMENT);
}

TEST_CASE("scoring") {
  const char* hyps[] = {"the cat sat on the mat"};
  const char* refs[] = {"the cat sat on the mat"};
  char* out = nullptr;
  REQUIRE(pk_score(R"({"kind": "bleu"})", hyps, refs, 1, &out) == PK_OK);
  CHECK(take_json(out)["score"] == 100.0);
  REQUIRE(pk_score(R"({"kind": "chrf++"})", hyps, refs, 1, &out) == PK_OK);
  CHECK(take_json(out)["score"] == 100.0);
  CHECK(pk_score(R"({"kind": "bleu"})", hyps, refs, 0, &out) == PK_ERR_ARGUMENT);
  CHECK(pk_score(R"({"kind": "meteor"})", hyps, refs, 1, &out) == PK_ERR_CONFIG);
}

TEST_CASE("data, model, train, evaluate, prune, quantize, save, load") {
  const auto dir = temp_dir("flow");
  char* summary = nullptr;
  REQUIRE(pk_gen_data(R"({"task": "cipher", "n": 120, "seed": 1, "vocab_size": 16, "min_len": 2, "max_len": 5,
                         "test_size": 20, "dev_size": 10, "ood_n": 30})",
                      dir.c_str(), &summary) == PK_OK);
  take_json(summary);
  CHECK(fs::exists(fs::path(dir) / "task.json"));
  CHECK(fs::exists(fs::path(dir) / "ood.jsonl"));

  pk_corpus* corpus = nullptr;
  REQUIRE(pk_corpus_load((fs::path(dir) / "corpus.jsonl").c_str(), &corpus) == PK_OK);
  CHECK(pk_corpus_size(corpus) == 120);

  pk_model* m = nullptr;
  REQUIRE(pk_model_build(kTinyModel, 3, &m) == PK_OK);
  char* out = nullptr;
  REQUIRE(pk_model_train(m, corpus, "train", R"({"epochs": 3, "lr": 0.003, "seed": 1})", &out) == PK_OK);
  const json train = take_json(out);
  CHECK(train["steps"].get<int>() > 0);

  REQUIRE(pk_model_evaluate(m, corpus, "test", 16, &out) == PK_OK);
  const json scores = take_json(out);
  CHECK(scores.contains("chrf"));
  CHECK(pk_model_evaluate(m, corpus, "nope", 16, &out) != PK_OK);

  const int src[] = {3, 4, 5};
  int dec[16];
  size_t len = 0;
  REQUIRE(pk_model_decode(m, src, 3, 16, dec, 16, &len) == PK_OK);
  CHECK(len >= 1);
  CHECK(len <= 16);
  const int bad[] = {3, 99};
  CHECK(pk_model_decode(m, bad, 2, 16, dec, 16, &len) != PK_OK);

  REQUIRE(pk_model_prune(m, corpus, R"({"strategy": "middle", "layers": 2})", &out) == PK_OK);
  const json plan = take_json(out);
  CHECK(plan["removed"].size() == 2);
  CHECK(pk_model_prune(m, corpus, R"({"strategy": "middle", "layers": 2})", &out) == PK_ERR_REFUSED);

  REQUIRE(pk_model_info(m, 0, &out) == PK_OK);
  const json info = take_json(out);

  REQUIRE(pk_model_quantize(m, R"({"double_quant": true})") == PK_OK);
  CHECK(pk_model_quantize(m, "{}") == PK_ERR_REFUSED);
  REQUIRE(pk_model_attach_lora(m, R"({"rank": 2, "alpha": 4})", 5) == PK_OK);
  CHECK(pk_model_attach_lora(m, R"({"rank": 2, "alpha": 4})", 5) == PK_ERR_REFUSED);

  const auto ckpt = (fs::path(dir) / "m.pkpt").string();
  REQUIRE(pk_model_save(m, ckpt.c_str(), R"({"stage": "capi"})") == PK_OK);
  pk_model* back = nullptr;
  REQUIRE(pk_model_load(ckpt.c_str(), &back) == PK_OK);
  int d1[16], d2[16];
  size_t l1 = 0, l2 = 0;
  pk_model_decode(m, src, 3, 16, d1, 16, &l1);
  pk_model_decode(back, src, 3, 16, d2, 16, &l2);
  CHECK(std::vector<int>(d1, d1 + l1) == std::vector<int>(d2, d2 + l2));

  REQUIRE(pk_checkpoint_storage(ckpt.c_str(), 0, &out) == PK_OK);
  const json storage = take_json(out);
  CHECK(storage["adapter_params"].get<long>() > 0);
  CHECK(storage["total_bytes"].get<long>() < info["storage"]["total_bytes"].get<long>());

  const auto junk = (fs::path(dir) / "junk.pkpt").string();
  std::FILE* f = std::fopen(junk.c_str(), "wb");
  std::fputs("PKPTgarbage", f);
  std::fclose(f);
  pk_model* none = nullptr;
  CHECK(pk_model_load(junk.c_str(), &none) == PK_ERR_FORMAT);
  CHECK(std::string(pk_last_error()).find("offset") != std::string::npos);
  CHECK(pk_model_load((fs::path(dir) / "missing.pkpt").c_str(), &none) == PK_ERR_IO);

  pk_model_free(back);
  pk_model_free(m);
  pk_corpus_free(corpus);
}

TEST_CASE("distillation") {
  const auto dir = temp_dir("kd");
  char* out = nullptr;
  REQUIRE(pk_gen_data(R"({"task": "copy", "n": 60, "seed": 2, "vocab_size": 16, "min_len": 2, "max_len": 4,
                         "test_size": 10, "dev_size": 0})",
                      dir.c_str(), &out) == PK_OK);
  pk_string_free(out);
  pk_corpus* corpus = nullptr;
  REQUIRE(pk_corpus_load((fs::path(dir) / "corpus.jsonl").c_str(), &corpus) == PK_OK);
  pk_model* teacher = nullptr;
  REQUIRE(pk_model_build(kTinyModel, 1, &teacher) == PK_OK);
  pk_corpus* mixed = nullptr;
  char* summary = nullptr;
  REQUIRE(pk_distill(teacher, corpus, R"({"split": "train", "max_len": 8})", &mixed, &summary) == PK_OK);
  const json s = take_json(summary);
  CHECK(pk_corpus_size(mixed) == s["augmented"].get<std::size_t>());
  CHECK(pk_corpus_size(mixed) >= 50);
  CHECK(pk_corpus_size(mixed) <= 100);
  CHECK(pk_corpus_save(mixed, (fs::path(dir) / "mixed.jsonl").c_str()) == PK_OK);
  pk_corpus_free(mixed);
  pk_model_free(teacher);
  pk_corpus_free(corpus);
}

TEST_CASE("recipes") {
  char* out = nullptr;
  REQUIRE(pk_builtin_recipe("setup2", 7, &out) == PK_OK);
  json recipe = take_json(out);
  CHECK(recipe["seed"] == 7);
  CHECK(pk_builtin_recipe("setup9", 0, &out) == PK_ERR_CONFIG);

  recipe["stages"] = json::array();
  recipe["output_dir"] = temp_dir("empty_recipe");
  REQUIRE(pk_run_recipe(recipe.dump().c_str(), 0, 0, &out) == PK_OK);
  CHECK(take_json(out)["stages"].empty());

  recipe["stages"] = json::array({json{{"kind", "prune"}, {"params", {{"layers", 1}}}}});
  CHECK(pk_run_recipe(recipe.dump().c_str(), 0, 0, &out) == PK_ERR_CONFIG);
  CHECK(std::string(pk_last_error()).find("train_full") != std::string::npos);

  // A stage that fails at run time still leaves a manifest.
  const auto dir = temp_dir("failing_recipe");
  recipe["output_dir"] = dir;
  recipe["data"]["n"] = 120;
  recipe["data"]["test_size"] = 20;
  recipe["data"]["dev_size"] = 10;
  recipe["stages"] = json::array({json{{"kind", "train_full"}, {"params", {{"epochs", 1}}}},
                                  json{{"kind", "prune"}, {"params", {{"strategy", "middle"}, {"layers", 8}}}}});
  CHECK(pk_run_recipe(recipe.dump().c_str(), 0, 0, &out) == PK_ERR_STAGE);
  CHECK(std::string(pk_last_error()).find("prune") != std::string::npos);
  const json manifest = take_json(out);
  CHECK(manifest["status"] == "failed");
  const auto path = (fs::path(dir) / "manifest.json").string();
  REQUIRE(fs::exists(path));
  char* text = nullptr;
  char* rj = nullptr;
  REQUIRE(pk_render_report(path.c_str(), &text, &rj) == PK_OK);
  CHECK(std::string(text).find("failed") != std::string::npos);
  pk_string_free(text);
  CHECK(take_json(rj)["rows"].size() == 2);
}
