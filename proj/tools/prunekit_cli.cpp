// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prunekit/prunekit.h"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitFailure = 3;

struct CliError {
  int code;
  std::string message;
};

int exit_code(pk_status s) {
  if (s == PK_OK) return kExitOk;
  if (s == PK_ERR_CONFIG || s == PK_ERR_ARGUMENT) return kExitConfig;
  return kExitFailure;
}

void check(pk_status s, const std::string& what) {
  if (s != PK_OK) throw CliError{exit_code(s), what + ": " + pk_status_name(s) + ": " + pk_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  pk_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CliError{kExitConfig, "cannot open '" + path + "'"};
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream is(read_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CliError{kExitFailure, "cannot write '" + path + "'"};
  os << text;
}

struct CorpusHandle {
  pk_corpus* p = nullptr;
  explicit CorpusHandle(const std::string& path) { check(pk_corpus_load(path.c_str(), &p), "loading corpus"); }
  ~CorpusHandle() { pk_corpus_free(p); }
};

struct ModelHandle {
  pk_model* p = nullptr;
  ModelHandle() = default;
  explicit ModelHandle(const std::string& path) { check(pk_model_load(path.c_str(), &p), "loading checkpoint"); }
  ~ModelHandle() { pk_model_free(p); }
};

json train_options(std::size_t epochs, std::size_t batch, double lr, double wd, unsigned long long seed) {
  return {{"epochs", epochs}, {"batch_size", batch}, {"lr", lr}, {"weight_decay", wd}, {"seed", seed}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prunekit: layer pruning, 4-bit quantization, adapters and distillation for seq2seq models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pk_version());

  // score
  auto* score = app.add_subcommand("score", "Score hypotheses against references (one segment per line)");
  std::string metric = "chrf", hyp_path, ref_path;
  double beta = 2.0;
  score->add_option("--metric", metric, "bleu, chrf or chrf++")->check(CLI::IsMember({"bleu", "chrf", "chrf++"}));
  score->add_option("--hyp", hyp_path, "Hypothesis file")->required();
  score->add_option("--ref", ref_path, "Reference file")->required();
  score->add_option("--beta", beta, "chrF beta");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic parallel corpus");
  std::string task = "cipher", out_dir;
  std::size_t n = 884, vocab = 40, window = 3, test_size = 100, dev_size = 50, ood_n = 0;
  unsigned long long seed = 0;
  gen->add_option("--task", task, "cipher or copy")->check(CLI::IsMember({"cipher", "copy"}));
  gen->add_option("--n", n, "Number of segments");
  gen->add_option("--seed", seed, "Seed");
  gen->add_option("--vocab", vocab, "Vocabulary size including pad/bos/eos");
  gen->add_option("--window", window, "Reorder window");
  gen->add_option("--test-size", test_size, "Test split size");
  gen->add_option("--dev-size", dev_size, "Dev split size");
  gen->add_option("--ood-n", ood_n, "Out-of-domain segments to generate");
  gen->add_option("--out", out_dir, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Full fine-tuning of a new or existing model");
  std::string corpus_path, out_path, init_path, model_cfg_path, split = "train";
  std::size_t epochs = 6, batch = 4;
  double lr = 1e-3, wd = 0.001;
  train->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  train->add_option("--out", out_path, "Output checkpoint")->required();
  train->add_option("--init", init_path, "Start from this checkpoint");
  train->add_option("--model-config", model_cfg_path, "Model config JSON for a new model");
  train->add_option("--split", split, "Training split");
  train->add_option("--epochs", epochs);
  train->add_option("--batch-size", batch);
  train->add_option("--lr", lr);
  train->add_option("--weight-decay", wd);
  train->add_option("--seed", seed);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score greedy output of a checkpoint on a corpus split");
  std::string model_path;
  std::size_t max_len = 1024;
  eval->add_option("--model", model_path)->required();
  eval->add_option("--corpus", corpus_path)->required();
  eval->add_option("--split", split);
  eval->add_option("--max-len", max_len);

  // prune
  auto* prune = app.add_subcommand("prune", "Remove transformer layers");
  std::string in_path, strategy = "iterative", pool = "decoder_only", plan_path;
  std::size_t layers = 0;
  prune->add_option("--in", in_path, "Input checkpoint")->required();
  prune->add_option("--out", out_path, "Output checkpoint")->required();
  prune->add_option("--strategy", strategy)->check(CLI::IsMember({"iterative", "middle", "recovery"}));
  prune->add_option("--layers", layers, "Layers to remove")->required();
  prune->add_option("--metric", metric, "Selection metric")->check(CLI::IsMember({"bleu", "chrf", "chrf++"}));
  prune->add_option("--pool", pool)->check(CLI::IsMember({"decoder_only", "encoder_and_decoder"}));
  prune->add_option("--corpus", corpus_path, "Corpus with dev (and train) splits");
  prune->add_option("--plan", plan_path, "Write the pruning plan JSON here");
  prune->add_option("--max-len", max_len);
  prune->add_option("--epochs", epochs, "Recovery epochs per removal");
  prune->add_option("--lr", lr);
  prune->add_option("--seed", seed);

  // quantize
  auto* quantize = app.add_subcommand("quantize", "NF4-quantize every linear weight");
  bool double_quant = false;
  std::size_t block_size = 64;
  quantize->add_option("--in", in_path)->required();
  quantize->add_option("--out", out_path)->required();
  quantize->add_flag("--double-quant", double_quant, "Quantize the block scales again");
  quantize->add_option("--block-size", block_size);

  // distill
  auto* distill = app.add_subcommand("distill", "Sequence-level distillation with dedup");
  std::string teacher_path, dedup = "pair";
  std::size_t oversample = 1;
  distill->add_option("--teacher", teacher_path)->required();
  distill->add_option("--corpus", corpus_path)->required();
  distill->add_option("--out", out_path, "Output corpus JSONL")->required();
  distill->add_option("--dedup", dedup)->check(CLI::IsMember({"pair", "target"}));
  distill->add_option("--oversample", oversample);
  distill->add_option("--max-len", max_len);

  // run
  auto* run = app.add_subcommand("run", "Run a multi-stage recipe");
  std::string recipe_path, builtin, output_dir;
  bool force = false, verbose = false, print_recipe = false;
  std::vector<std::size_t> sweep;
  run->add_option("--recipe", recipe_path, "Recipe JSON");
  run->add_option("--builtin", builtin, "setup1 or setup2")->check(CLI::IsMember({"setup1", "setup2"}));
  run->add_option("--seed", seed, "Seed for a built-in recipe");
  run->add_option("--output-dir", output_dir, "Override the output directory");
  run->add_option("--ood-sweep", sweep, "Out-of-domain sizes to sweep")->delimiter(',');
  run->add_flag("--force", force, "Rerun stages with stored results");
  run->add_flag("--verbose,-v", verbose);
  run->add_flag("--print-recipe", print_recipe, "Print the recipe JSON and exit");

  // report
  auto* report = app.add_subcommand("report", "Render a manifest as a table");
  std::string manifest_path;
  bool as_json = false;
  report->add_option("--manifest", manifest_path)->required();
  report->add_flag("--json", as_json);

  // info
  auto* info = app.add_subcommand("info", "Describe a checkpoint");
  bool bf16 = false;
  info->add_option("--model", model_path)->required();
  info->add_flag("--bf16", bf16, "Account dense tensors at 2 bytes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*score) {
      const auto hyps = read_lines(hyp_path);
      const auto refs = read_lines(ref_path);
      std::vector<const char*> h, r;
      for (const auto& s : hyps) h.push_back(s.c_str());
      for (const auto& s : refs) r.push_back(s.c_str());
      if (h.size() != r.size()) {
        throw CliError{kExitConfig, "hypothesis and reference files differ in line count"};
      }
      char* out = nullptr;
      const json cfg = {{"kind", metric}, {"beta", beta}};
      check(pk_score(cfg.dump().c_str(), h.data(), r.data(), h.size(), &out), "score");
      std::cout << json::parse(take(out)).dump(2) << "\n";
    } else if (*gen) {
      const json o = {{"task", task},           {"n", n},           {"seed", seed},
                      {"vocab_size", vocab},    {"window", window}, {"test_size", test_size},
                      {"dev_size", dev_size},   {"ood_n", ood_n}};
      char* out = nullptr;
      check(pk_gen_data(o.dump().c_str(), out_dir.c_str(), &out), "gen-data");
      std::cout << json::parse(take(out)).dump(2) << "\n";
    } else if (*train) {
      CorpusHandle corpus(corpus_path);
      ModelHandle m;
      if (!init_path.empty()) {
        check(pk_model_load(init_path.c_str(), &m.p), "loading checkpoint");
      } else {
        json cfg = {{"vocab_size", 40}, {"d_model", 32}, {"n_heads", 4}, {"d_ff", 64},
                    {"encoder_layers", 2}, {"decoder_layers", 8}, {"max_positions", 32}};
        if (!model_cfg_path.empty()) cfg = json::parse(read_file(model_cfg_path));
        check(pk_model_build(cfg.dump().c_str(), seed, &m.p), "building model");
      }
      char* out = nullptr;
      const json o = train_options(epochs, batch, lr, wd, seed);
      check(pk_model_train(m.p, corpus.p, split.c_str(), o.dump().c_str(), &out), "train");
      const json res = json::parse(take(out));
      check(pk_model_save(m.p, out_path.c_str(), json({{"stage", "train"}, {"seed", seed}}).dump().c_str()), "saving");
      std::cout << json({{"steps", res["steps"]}, {"final_loss", res["loss_curve"].empty() ? json(nullptr) : res["loss_curve"].back()},
                         {"checkpoint", out_path}}).dump(2)
                << "\n";
    } else if (*eval) {
      ModelHandle m(model_path);
      CorpusHandle corpus(corpus_path);
      char* out = nullptr;
      check(pk_model_evaluate(m.p, corpus.p, split == "all" ? "" : split.c_str(), max_len, &out), "evaluate");
      std::cout << json::parse(take(out)).dump(2) << "\n";
    } else if (*prune) {
      ModelHandle m(in_path);
      pk_corpus* cp = nullptr;
      if (!corpus_path.empty()) check(pk_corpus_load(corpus_path.c_str(), &cp), "loading corpus");
      const json o = {{"strategy", strategy}, {"layers", layers}, {"pool", pool}, {"metric", metric},
                      {"max_len", max_len},   {"epochs", epochs}, {"lr", lr},     {"seed", seed}};
      char* out = nullptr;
      const pk_status st = pk_model_prune(m.p, cp, o.dump().c_str(), &out);
      pk_corpus_free(cp);
      check(st, "prune");
      const std::string plan = take(out);
      if (!plan_path.empty()) write_file(plan_path, json::parse(plan).dump(2) + "\n");
      check(pk_model_save(m.p, out_path.c_str(), json({{"stage", "prune"}, {"pruning_plan", json::parse(plan)}}).dump().c_str()),
            "saving");
      std::cout << json::parse(plan).dump(2) << "\n";
    } else if (*quantize) {
      ModelHandle m(in_path);
      const json o = {{"block_size", block_size}, {"double_quant", double_quant}};
      check(pk_model_quantize(m.p, o.dump().c_str()), "quantize");
      check(pk_model_save(m.p, out_path.c_str(), json({{"stage", "quantize"}}).dump().c_str()), "saving");
      char* out = nullptr;
      check(pk_checkpoint_storage(out_path.c_str(), 0, &out), "storage");
      std::cout << json::parse(take(out)).dump(2) << "\n";
    } else if (*distill) {
      ModelHandle teacher(teacher_path);
      CorpusHandle corpus(corpus_path);
      const json o = {{"dedup", dedup}, {"oversample", oversample}, {"max_len", max_len}};
      pk_corpus* result = nullptr;
      char* out = nullptr;
      check(pk_distill(teacher.p, corpus.p, o.dump().c_str(), &result, &out), "distill");
      const pk_status st = pk_corpus_save(result, out_path.c_str());
      pk_corpus_free(result);
      check(st, "saving corpus");
      std::cout << json::parse(take(out)).dump(2) << "\n";
    } else if (*run) {
      if (recipe_path.empty() == builtin.empty()) throw CliError{kExitConfig, "give exactly one of --recipe or --builtin"};
      json recipe;
      if (!builtin.empty()) {
        char* out = nullptr;
        check(pk_builtin_recipe(builtin.c_str(), seed, &out), "recipe");
        recipe = json::parse(take(out));
      } else {
        try {
          recipe = json::parse(read_file(recipe_path));
        } catch (const json::parse_error& e) {
          throw CliError{kExitConfig, "recipe '" + recipe_path + "' is not valid JSON: " + e.what()};
        }
      }
      if (!output_dir.empty()) recipe["output_dir"] = output_dir;
      if (print_recipe) {
        std::cout << recipe.dump(2) << "\n";
        return kExitOk;
      }
      char* out = nullptr;
      pk_status st;
      if (!sweep.empty()) {
        st = pk_run_ood_sweep(recipe.dump().c_str(), sweep.data(), sweep.size(), force, &out);
      } else {
        st = pk_run_recipe(recipe.dump().c_str(), force, verbose, &out);
      }
      const std::string manifest = take(out);
      if (st != PK_OK && st != PK_ERR_STAGE) check(st, "run");
      if (!manifest.empty()) {
        const json m = json::parse(manifest);
        if (sweep.empty()) {
          const std::string path = m.value("output_dir", std::string(".")) + "/manifest.json";
          char* text = nullptr;
          char* rj = nullptr;
          check(pk_render_report(path.c_str(), &text, &rj), "report");
          std::cout << take(text);
          take(rj);
        } else {
          for (const auto& man : m) {
            std::cout << man.value("recipe_name", std::string()) << ": " << man.value("status", std::string()) << "\n";
          }
        }
      }
      check(st, "run");
    } else if (*report) {
      char* text = nullptr;
      char* rj = nullptr;
      check(pk_render_report(manifest_path.c_str(), &text, &rj), "report");
      const std::string t = take(text), j = take(rj);
      std::cout << (as_json ? j + "\n" : t);
    } else if (*info) {
      ModelHandle m(model_path);
      char* out = nullptr;
      check(pk_model_info(m.p, bf16, &out), "info");
      std::cout << json::parse(take(out)).dump(2) << "\n";
    }
  } catch (const CliError& e) {
    std::cerr << "prunekit: " << e.message << "\n";
    return e.code;
  } catch (const json::exception& e) {
    std::cerr << "prunekit: invalid JSON: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
