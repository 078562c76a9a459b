// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <unordered_map>

#include "common.hpp"

namespace prunekit::metrics {

MetricKind parse_metric_kind(const std::string& s) {
  if (s == "bleu") return MetricKind::kBleu;
  if (s == "chrf") return MetricKind::kChrf;
  if (s == "chrf++") return MetricKind::kChrfPlusPlus;
  if (s == "custom") return MetricKind::kCustom;
  fail(ErrorKind::kConfig, "unknown metric '" + s + "' (expected bleu, chrf, chrf++ or custom)");
}

std::string metric_kind_name(MetricKind k) {
  switch (k) {
    case MetricKind::kBleu: return "bleu";
    case MetricKind::kChrf: return "chrf";
    case MetricKind::kChrfPlusPlus: return "chrf++";
    case MetricKind::kCustom: return "custom";
  }
  return "?";
}

ScorerConfig ScorerConfig::for_kind(MetricKind kind) {
  ScorerConfig c;
  c.kind = kind;
  c.word_ngram_max = kind == MetricKind::kChrfPlusPlus ? 2 : 0;
  return c;
}

void ScorerConfig::validate() const {
  if (!(beta > 0)) fail(ErrorKind::kConfig, "scorer: beta must be > 0");
  if (char_ngram_max < 1) fail(ErrorKind::kConfig, "scorer: char_ngram_max must be >= 1");
  if (word_ngram_max < 0) fail(ErrorKind::kConfig, "scorer: word_ngram_max must be >= 0");
  if (bleu_max_order < 1) fail(ErrorKind::kConfig, "scorer: bleu_max_order must be >= 1");
  if (bleu_smoothing != "none" && bleu_smoothing != "exp") {
    fail(ErrorKind::kConfig, "scorer: unknown BLEU smoothing '" + bleu_smoothing + "'");
  }
}

std::string ScorerConfig::fingerprint() const {
  char beta_buf[32];
  std::snprintf(beta_buf, sizeof(beta_buf), "%g", beta);
  std::ostringstream os;
  switch (kind) {
    case MetricKind::kBleu:
      os << "BLEU|n:" << bleu_max_order << "|smooth:" << bleu_smoothing << "|tok:whitespace";
      break;
    case MetricKind::kChrf:
    case MetricKind::kChrfPlusPlus:
      os << (word_ngram_max > 0 ? "chrF++" : "chrF") << "|nc:" << char_ngram_max << "|nw:" << word_ngram_max
         << "|beta:" << beta_buf << "|space:no";
      break;
    case MetricKind::kCustom:
      os << "custom|name:" << custom_name;
      break;
  }
  return os.str();
}

nlohmann::json ScorerConfig::to_json() const {
  nlohmann::json j = {{"kind", metric_kind_name(kind)},
                      {"char_ngram_max", char_ngram_max},
                      {"word_ngram_max", word_ngram_max},
                      {"beta", beta},
                      {"bleu_max_order", bleu_max_order},
                      {"bleu_smoothing", bleu_smoothing}};
  if (kind == MetricKind::kCustom) j["custom_name"] = custom_name;
  return j;
}

ScorerConfig ScorerConfig::from_json(const nlohmann::json& j) {
  ScorerConfig c = for_kind(parse_metric_kind(j.value("kind", std::string("chrf"))));
  c.char_ngram_max = j.value("char_ngram_max", c.char_ngram_max);
  c.word_ngram_max = j.value("word_ngram_max", c.word_ngram_max);
  c.beta = j.value("beta", c.beta);
  c.bleu_max_order = j.value("bleu_max_order", c.bleu_max_order);
  c.bleu_smoothing = j.value("bleu_smoothing", c.bleu_smoothing);
  c.custom_name = j.value("custom_name", c.custom_name);
  c.validate();
  return c;
}

nlohmann::json ScoreReport::to_json() const {
  return {{"metric", metric}, {"score", score}, {"segment_scores", segment_scores}, {"fingerprint", fingerprint}};
}

namespace {

void check_inputs(const std::vector<std::string>& hyps, const std::vector<std::string>& refs, const char* name) {
  if (hyps.empty()) fail(ErrorKind::kArgument, std::string(name) + ": empty hypothesis set");
  if (hyps.size() != refs.size()) {
    fail(ErrorKind::kArgument, std::string(name) + ": " + std::to_string(hyps.size()) + " hypotheses but " +
                                   std::to_string(refs.size()) + " references");
  }
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

// N-gram counts keyed by the joined tokens.
using Counts = std::unordered_map<std::string, int>;

Counts word_ngrams(const std::vector<std::string>& toks, int n) {
  Counts c;
  if (static_cast<int>(toks.size()) < n) return c;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (int k = 1; k < n; ++k) key += ' ' + toks[i + k];
    ++c[key];
  }
  return c;
}

std::u32string decode_utf8(const std::string& s) {
  std::u32string out;
  for (std::size_t i = 0; i < s.size();) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    int len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
    if (i + len > s.size()) len = 1;
    char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1F) : len == 3 ? (c & 0x0F) : (c & 0x07);
    for (int k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    out.push_back(cp);
    i += len;
  }
  return out;
}

bool is_space(char32_t c) { return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\v' || c == U'\f'; }

std::vector<std::unordered_map<std::u32string, int>> char_ngrams(const std::string& s, int max_order) {
  std::u32string text;
  for (char32_t c : decode_utf8(s)) {
    if (!is_space(c)) text.push_back(c);
  }
  std::vector<std::unordered_map<std::u32string, int>> out(max_order);
  for (int n = 1; n <= max_order; ++n) {
    if (static_cast<int>(text.size()) < n) continue;
    for (std::size_t i = 0; i + n <= text.size(); ++i) ++out[n - 1][text.substr(i, n)];
  }
  return out;
}

// Separates a single leading or trailing punctuation mark from each word.
std::vector<std::string> chrf_words(const std::string& s) {
  static const std::string kPuncts = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
  std::vector<std::string> out;
  for (const auto& w : split_ws(s)) {
    if (w.size() == 1) {
      out.push_back(w);
    } else if (kPuncts.find(w.back()) != std::string::npos) {
      out.push_back(w.substr(0, w.size() - 1));
      out.push_back(w.substr(w.size() - 1));
    } else if (kPuncts.find(w.front()) != std::string::npos) {
      out.push_back(w.substr(0, 1));
      out.push_back(w.substr(1));
    } else {
      out.push_back(w);
    }
  }
  return out;
}

template <class Map>
NgramStats match_stats(const Map& h, const Map& r) {
  NgramStats s;
  long hyp_count = 0;
  for (const auto& [g, c] : h) {
    hyp_count += c;
    auto it = r.find(g);
    if (it != r.end()) s.match += std::min(c, it->second);
  }
  // No credit for hypothesis n-grams when the reference has none of that order.
  s.hyp = r.empty() ? 0 : hyp_count;
  for (const auto& [g, c] : r) s.ref += c;
  return s;
}

double chrf_from_stats(const std::vector<NgramStats>& stats, double beta) {
  const double factor = beta * beta;
  double avg_prec = 0, avg_rec = 0;
  int effective = 0;
  for (const auto& s : stats) {
    if (s.hyp > 0 && s.ref > 0) {
      avg_prec += static_cast<double>(s.match) / static_cast<double>(s.hyp);
      avg_rec += static_cast<double>(s.match) / static_cast<double>(s.ref);
      ++effective;
    }
  }
  if (effective == 0) return 0.0;
  avg_prec /= effective;
  avg_rec /= effective;
  if (avg_prec + avg_rec == 0.0) return 0.0;
  return 100.0 * (1 + factor) * avg_prec * avg_rec / (factor * avg_prec + avg_rec);
}

}  // namespace

std::vector<NgramStats> chrf_statistics(const std::string& hyp, const std::string& ref, const ScorerConfig& c) {
  std::vector<NgramStats> stats;
  const auto hc = char_ngrams(hyp, c.char_ngram_max);
  const auto rc = char_ngrams(ref, c.char_ngram_max);
  for (int n = 0; n < c.char_ngram_max; ++n) stats.push_back(match_stats(hc[n], rc[n]));
  if (c.word_ngram_max > 0) {
    const auto hw = chrf_words(hyp);
    const auto rw = chrf_words(ref);
    for (int n = 1; n <= c.word_ngram_max; ++n) stats.push_back(match_stats(word_ngrams(hw, n), word_ngrams(rw, n)));
  }
  return stats;
}

namespace {

struct BleuStats {
  std::vector<long> correct, total;
  long sys_len = 0, ref_len = 0;
};

BleuStats bleu_segment(const std::string& hyp, const std::string& ref, int max_order) {
  BleuStats s;
  s.correct.assign(max_order, 0);
  s.total.assign(max_order, 0);
  const auto h = split_ws(hyp);
  const auto r = split_ws(ref);
  s.sys_len = static_cast<long>(h.size());
  s.ref_len = static_cast<long>(r.size());
  for (int n = 1; n <= max_order; ++n) {
    const Counts hc = word_ngrams(h, n);
    const Counts rc = word_ngrams(r, n);
    for (const auto& [g, c] : hc) {
      s.total[n - 1] += c;
      auto it = rc.find(g);
      if (it != rc.end()) s.correct[n - 1] += std::min(c, it->second);
    }
  }
  return s;
}

double bleu_from_stats(const BleuStats& s, const ScorerConfig& c) {
  double bp = 1.0;
  if (s.sys_len < s.ref_len) bp = s.sys_len > 0 ? std::exp(1.0 - double(s.ref_len) / double(s.sys_len)) : 0.0;
  if (std::all_of(s.correct.begin(), s.correct.end(), [](long v) { return v == 0; })) return 0.0;
  double log_sum = 0;
  int orders = 0;
  double smooth = 1.0;
  for (int n = 0; n < c.bleu_max_order; ++n) {
    if (s.total[n] == 0) break;
    ++orders;
    double p;
    if (s.correct[n] == 0) {
      if (c.bleu_smoothing != "exp") return 0.0;
      smooth *= 2;
      p = 1.0 / (smooth * double(s.total[n]));
    } else {
      p = double(s.correct[n]) / double(s.total[n]);
    }
    log_sum += std::log(p);
  }
  if (orders == 0) return 0.0;
  return 100.0 * bp * std::exp(log_sum / orders);
}

}  // namespace

ScoreReport bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                 const ScorerConfig& config) {
  check_inputs(hyps, refs, "bleu");
  config.validate();
  ScoreReport rep;
  rep.metric = "BLEU";
  rep.fingerprint = config.fingerprint();
  BleuStats corpus;
  corpus.correct.assign(config.bleu_max_order, 0);
  corpus.total.assign(config.bleu_max_order, 0);
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const BleuStats s = bleu_segment(hyps[i], refs[i], config.bleu_max_order);
    rep.segment_scores.push_back(bleu_from_stats(s, config));
    for (int n = 0; n < config.bleu_max_order; ++n) {
      corpus.correct[n] += s.correct[n];
      corpus.total[n] += s.total[n];
    }
    corpus.sys_len += s.sys_len;
    corpus.ref_len += s.ref_len;
  }
  rep.score = bleu_from_stats(corpus, config);
  return rep;
}

ScoreReport chrf(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                 const ScorerConfig& config) {
  check_inputs(hyps, refs, "chrf");
  config.validate();
  ScoreReport rep;
  rep.metric = config.word_ngram_max > 0 ? "chrF++" : "chrF";
  rep.fingerprint = config.fingerprint();
  std::vector<NgramStats> corpus(config.char_ngram_max + config.word_ngram_max);
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto s = chrf_statistics(hyps[i], refs[i], config);
    rep.segment_scores.push_back(chrf_from_stats(s, config.beta));
    for (std::size_t k = 0; k < s.size(); ++k) {
      corpus[k].hyp += s[k].hyp;
      corpus[k].ref += s[k].ref;
      corpus[k].match += s[k].match;
    }
  }
  rep.score = chrf_from_stats(corpus, config.beta);
  return rep;
}

Scorer::Scorer(ScorerConfig config, CustomScoreFn custom) : config_(std::move(config)), custom_(std::move(custom)) {
  config_.validate();
}

Scorer Scorer::constant(double value, const std::string& name) {
  ScorerConfig c;
  c.kind = MetricKind::kCustom;
  c.custom_name = name;
  return Scorer(c, [value](const auto&, const auto&) { return value; });
}

ScoreReport Scorer::report(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) const {
  switch (config_.kind) {
    case MetricKind::kBleu: return bleu(hyps, refs, config_);
    case MetricKind::kChrf:
    case MetricKind::kChrfPlusPlus: return chrf(hyps, refs, config_);
    case MetricKind::kCustom: {
      if (!custom_) fail(ErrorKind::kConfig, "custom scorer '" + config_.custom_name + "' has no scoring function");
      check_inputs(hyps, refs, "custom");
      ScoreReport r;
      r.metric = config_.custom_name;
      r.score = custom_(hyps, refs);
      r.fingerprint = config_.fingerprint();
      return r;
    }
  }
  fail(ErrorKind::kConfig, "unknown scorer kind");
}

double Scorer::score(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) const {
  return report(hyps, refs).score;
}

double score(const Scorer& scorer, const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  return scorer.score(hyps, refs);
}

}  // namespace prunekit::metrics
