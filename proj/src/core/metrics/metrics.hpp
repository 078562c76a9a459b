// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace prunekit::metrics {

enum class MetricKind { kBleu, kChrf, kChrfPlusPlus, kCustom };

MetricKind parse_metric_kind(const std::string& s);
std::string metric_kind_name(MetricKind k);

struct ScorerConfig {
  MetricKind kind = MetricKind::kChrf;
  int char_ngram_max = 6;
  int word_ngram_max = 0;
  double beta = 2.0;
  int bleu_max_order = 4;
  // "none" or "exp"; BLEU only.
  std::string bleu_smoothing = "none";
  // Label for custom scorers.
  std::string custom_name;

  // Defaults for a kind: chrF++ uses word bigrams, chrF none.
  static ScorerConfig for_kind(MetricKind kind);
  void validate() const;
  // Signature string identifying every setting that affects the score.
  std::string fingerprint() const;
  nlohmann::json to_json() const;
  static ScorerConfig from_json(const nlohmann::json& j);
};

struct ScoreReport {
  std::string metric;
  double score = 0.0;  // corpus level, in [0, 100]
  std::vector<double> segment_scores;
  std::string fingerprint;

  nlohmann::json to_json() const;
};

// Corpus BLEU over whitespace tokens: clipped n-gram precisions up to
// max_order, geometric mean, brevity penalty exp(1 - r/c) when c < r.
// Orders for which the hypotheses contain no n-grams at all are left out of
// the mean, so any non-empty identical input scores 100.
ScoreReport bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                 const ScorerConfig& config = ScorerConfig::for_kind(MetricKind::kBleu));

// Corpus chrF / chrF++: character n-grams (whitespace removed) plus optional
// word n-grams, statistics summed over segments, precision and recall
// averaged over effective orders, then combined into F-beta.
ScoreReport chrf(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                 const ScorerConfig& config = ScorerConfig::for_kind(MetricKind::kChrf));

// Per-order counts behind chrF: character orders 1..char_ngram_max, then word
// orders 1..word_ngram_max.
struct NgramStats {
  long hyp = 0;
  long ref = 0;
  long match = 0;
};

std::vector<NgramStats> chrf_statistics(const std::string& hyp, const std::string& ref, const ScorerConfig& config);

using CustomScoreFn = std::function<double(const std::vector<std::string>&, const std::vector<std::string>&)>;

// A configured metric. Custom kinds carry their scoring function; this is
// where learned-metric stand-ins plug in.
class Scorer {
 public:
  explicit Scorer(ScorerConfig config = {}, CustomScoreFn custom = {});
  static Scorer constant(double value, const std::string& name = "constant");

  const ScorerConfig& config() const { return config_; }
  ScoreReport report(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) const;
  double score(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) const;

 private:
  ScorerConfig config_;
  CustomScoreFn custom_;
};

double score(const Scorer& scorer, const std::vector<std::string>& hyps, const std::vector<std::string>& refs);

}  // namespace prunekit::metrics
