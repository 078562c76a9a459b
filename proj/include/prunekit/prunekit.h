/*
 * Copyright 2026 The prunekit Authors
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef PRUNEKIT_PRUNEKIT_H_
#define PRUNEKIT_PRUNEKIT_H_

#include <stddef.h>

#if defined(_WIN32)
#if defined(PRUNEKIT_BUILDING_LIBRARY)
#define PK_API __declspec(dllexport)
#else
#define PK_API __declspec(dllimport)
#endif
#else
#define PK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. PK_OK is zero; every other value carries a message
 * retrievable with pk_last_error() on the calling thread. */
typedef enum pk_status {
  PK_OK = 0,
  PK_ERR_CONFIG = 1,
  PK_ERR_ARGUMENT = 2,
  PK_ERR_DIMENSION = 3,
  PK_ERR_NUMERIC = 4,
  PK_ERR_FORMAT = 5,
  PK_ERR_NOT_FOUND = 6,
  PK_ERR_REFUSED = 7,
  PK_ERR_SEQUENCE_LENGTH = 8,
  PK_ERR_IO = 9,
  PK_ERR_STAGE = 10,
  PK_ERR_INTERNAL = 11
} pk_status;

typedef struct pk_model pk_model;
typedef struct pk_corpus pk_corpus;

PK_API const char* pk_version(void);
PK_API const char* pk_status_name(pk_status status);
/* Message of the last failed call on this thread; "" after a success. */
PK_API const char* pk_last_error(void);
/* Frees strings returned through char** out-parameters. */
PK_API void pk_string_free(char* s);

/* ---- metrics ---- */

/* scorer_json: {"kind": "bleu"|"chrf"|"chrf++", "beta": ..., ...}.
 * Writes the score report as JSON. */
PK_API pk_status pk_score(const char* scorer_json, const char* const* hyps, const char* const* refs, size_t n,
                          char** report_json);

/* ---- data ---- */

/* options_json: {"task": "cipher"|"copy", "n", "seed", "vocab_size", "window", "min_len", "max_len",
 * "test_size", "dev_size", "ood_n"}. Writes task.json, corpus.jsonl (+ split sidecar) and, when
 * ood_n > 0, ood.jsonl into out_dir. */
PK_API pk_status pk_gen_data(const char* options_json, const char* out_dir, char** summary_json);

PK_API pk_status pk_corpus_load(const char* path, pk_corpus** out);
PK_API pk_status pk_corpus_save(const pk_corpus* corpus, const char* path);
PK_API size_t pk_corpus_size(const pk_corpus* corpus);
PK_API void pk_corpus_free(pk_corpus* corpus);

/* ---- models ---- */

PK_API pk_status pk_model_build(const char* config_json, unsigned long long seed, pk_model** out);
PK_API pk_status pk_model_load(const char* path, pk_model** out);
PK_API pk_status pk_model_save(const pk_model* model, const char* path, const char* metadata_json);
PK_API void pk_model_free(pk_model* model);
/* Config, layer ids, parameter counts and storage accounting as JSON. */
PK_API pk_status pk_model_info(const pk_model* model, int bf16_storage, char** info_json);

/* Greedy decoding. Writes up to capacity ids to out and the full length to out_len. */
PK_API pk_status pk_model_decode(const pk_model* model, const int* source, size_t source_len, size_t max_len, int* out,
                                 size_t capacity, size_t* out_len);

/* Trains on a split ("" for the whole corpus). train_json: {"epochs", "batch_size", "lr",
 * "weight_decay", "max_grad_norm", "seed"}. */
PK_API pk_status pk_model_train(pk_model* model, const pk_corpus* corpus, const char* split, const char* train_json,
                                char** result_json);

/* Scores greedy output on a split with BLEU, chrF and chrF++. */
PK_API pk_status pk_model_evaluate(const pk_model* model, const pk_corpus* corpus, const char* split, size_t max_len,
                                   char** scores_json);

/* strategy_json: {"strategy", "layers", "pool", "metric", "max_len", "dev_split", plus training keys for
 * recovery}. Replaces the model with the pruned one and writes the plan. */
PK_API pk_status pk_model_prune(pk_model* model, const pk_corpus* corpus, const char* strategy_json, char** plan_json);

/* options_json: {"block_size", "double_quant", "dq_group"}. */
PK_API pk_status pk_model_quantize(pk_model* model, const char* options_json);

/* lora_json: {"rank", "alpha", "dropout", "rs_lora"}. */
PK_API pk_status pk_model_attach_lora(pk_model* model, const char* lora_json, unsigned long long seed);

PK_API pk_status pk_checkpoint_storage(const char* path, int bf16_storage, char** report_json);

/* ---- distillation ---- */

/* Teacher translations of the split's sources merged with the authentic segments.
 * options_json: {"split", "dedup", "oversample", "max_len"}. */
PK_API pk_status pk_distill(const pk_model* teacher, const pk_corpus* corpus, const char* options_json,
                            pk_corpus** out, char** summary_json);

/* ---- pipeline ---- */

/* Built-in toy recipes: "setup1" or "setup2". */
PK_API pk_status pk_builtin_recipe(const char* name, unsigned long long seed, char** recipe_json);

/* Runs a recipe given as JSON text. Returns PK_ERR_STAGE with the manifest still written when a
 * stage fails. */
PK_API pk_status pk_run_recipe(const char* recipe_json, int force, int verbose, char** manifest_json);

/* Runs the recipe once per out-of-domain size; writes a JSON array of manifests. */
PK_API pk_status pk_run_ood_sweep(const char* recipe_json, const size_t* sizes, size_t n_sizes, int force,
                                  char** manifests_json);

PK_API pk_status pk_render_report(const char* manifest_path, char** text, char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* PRUNEKIT_PRUNEKIT_H_ */
