// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "data/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "common.hpp"

namespace prunekit::data {

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";
constexpr int kSyllables = 14 * 5;

std::string syllable(int s) {
  return {kConsonants[static_cast<std::size_t>(s / 5)], kVowels[static_cast<std::size_t>(s % 5)]};
}

int syllable_index(char c, char v) {
  const auto ci = kConsonants.find(c);
  const auto vi = kVowels.find(v);
  if (ci == std::string_view::npos || vi == std::string_view::npos) return -1;
  return static_cast<int>(ci * 5 + vi);
}

}  // namespace

std::string token_word(int id) {
  if (id == 0) return "<pad>";
  if (id == 1) return "<s>";
  if (id == 2) return "</s>";
  if (id < 0 || id >= 3 + kSyllables + kSyllables * kSyllables) {
    fail(ErrorKind::kArgument, "token id " + std::to_string(id) + " has no word form");
  }
  const int j = id - 3;
  if (j < kSyllables) return syllable(j);
  const int k = j - kSyllables;
  return syllable(k / kSyllables) + syllable(k % kSyllables);
}

int word_token(const std::string& w) {
  if (w == "<pad>") return 0;
  if (w == "<s>") return 1;
  if (w == "</s>") return 2;
  if (w.size() == 2) {
    const int s = syllable_index(w[0], w[1]);
    return s < 0 ? -1 : 3 + s;
  }
  if (w.size() == 4) {
    const int a = syllable_index(w[0], w[1]);
    const int b = syllable_index(w[2], w[3]);
    if (a < 0 || b < 0) return -1;
    return 3 + kSyllables + a * kSyllables + b;
  }
  return -1;
}

std::string render(const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += token_word(id);
  }
  return out;
}

std::vector<int> parse(const std::string& text) {
  std::vector<int> out;
  std::istringstream is(text);
  std::string w;
  while (is >> w) {
    const int id = word_token(w);
    if (id < 0) fail(ErrorKind::kArgument, "unknown token word '" + w + "'");
    out.push_back(id);
  }
  return out;
}

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kAuthentic: return "authentic";
    case Provenance::kDistilled: return "distilled";
    case Provenance::kOutOfDomain: return "out_of_domain";
  }
  return "?";
}

Provenance parse_provenance(const std::string& s) {
  if (s == "authentic") return Provenance::kAuthentic;
  if (s == "distilled") return Provenance::kDistilled;
  if (s == "out_of_domain") return Provenance::kOutOfDomain;
  fail(ErrorKind::kArgument, "unknown provenance '" + s + "'");
}

std::string dedup_key(const Segment& s, DedupKey mode) {
  std::string key;
  auto put = [&key](const std::vector<int>& v) {
    for (int t : v) key += std::to_string(t) + ',';
  };
  if (mode == DedupKey::kPair) {
    put(s.source);
    key += '|';
  }
  put(s.target);
  return key;
}

std::vector<Segment> ParallelCorpus::split(const std::string& name) const {
  if (name.empty()) return segments;
  auto it = splits.find(name);
  if (it == splits.end()) fail(ErrorKind::kNotFound, "corpus has no split '" + name + "'");
  std::vector<Segment> out;
  out.reserve(it->second.size());
  for (std::size_t i : it->second) out.push_back(segments.at(i));
  return out;
}

void ParallelCorpus::validate_splits() const {
  std::set<std::size_t> seen;
  for (const auto& [name, idx] : splits) {
    for (std::size_t i : idx) {
      if (i >= segments.size()) {
        fail(ErrorKind::kConfig, "split '" + name + "' index " + std::to_string(i) + " out of range");
      }
      if (!seen.insert(i).second) {
        fail(ErrorKind::kConfig, "split '" + name + "' overlaps another split at index " + std::to_string(i));
      }
    }
  }
}

std::vector<model::TrainExample> to_examples(const std::vector<Segment>& segs) {
  std::vector<model::TrainExample> out;
  out.reserve(segs.size());
  for (const auto& s : segs) out.push_back({s.source, s.target});
  return out;
}

std::vector<std::vector<int>> sources(const std::vector<Segment>& segs) {
  std::vector<std::vector<int>> out;
  out.reserve(segs.size());
  for (const auto& s : segs) out.push_back(s.source);
  return out;
}

std::vector<std::string> rendered_targets(const std::vector<Segment>& segs) {
  std::vector<std::string> out;
  out.reserve(segs.size());
  for (const auto& s : segs) out.push_back(render(s.target));
  return out;
}

// ---- synthetic task --------------------------------------------------------

std::vector<int> reorder(const std::vector<int>& tokens, std::size_t window) {
  std::vector<int> out = tokens;
  if (window <= 1) return out;
  for (std::size_t i = 0; i < out.size(); i += window) {
    std::reverse(out.begin() + static_cast<std::ptrdiff_t>(i),
                 out.begin() + static_cast<std::ptrdiff_t>(std::min(i + window, out.size())));
  }
  return out;
}

TaskSpec TaskSpec::make(std::size_t vocab_size, std::size_t reorder_window, std::uint64_t seed, bool copy) {
  TaskSpec t;
  t.vocab_size = vocab_size;
  t.reorder_window = copy ? 0 : reorder_window;
  t.seed = seed;
  t.cipher.resize(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) t.cipher[i] = static_cast<int>(i);
  if (!copy && vocab_size > 4) {
    Rng rng(seed);
    for (std::size_t i = vocab_size - 1; i > 3; --i) {
      const std::size_t j = 3 + rng.below(i - 2);
      std::swap(t.cipher[i], t.cipher[j]);
    }
  }
  t.validate();
  return t;
}

void TaskSpec::validate() const {
  if (vocab_size < 5) fail(ErrorKind::kConfig, "task: vocab_size must be >= 5");
  if (cipher.size() != vocab_size) fail(ErrorKind::kConfig, "task: cipher size differs from vocab_size");
  std::vector<bool> hit(vocab_size, false);
  for (std::size_t i = 0; i < vocab_size; ++i) {
    const int c = cipher[i];
    if (c < 0 || static_cast<std::size_t>(c) >= vocab_size || hit[c]) {
      fail(ErrorKind::kConfig, "task: cipher is not a permutation");
    }
    hit[c] = true;
    if (i < 3 && c != static_cast<int>(i)) fail(ErrorKind::kConfig, "task: cipher must fix pad, bos and eos");
  }
  if (min_len < 1 || min_len > max_len) fail(ErrorKind::kConfig, "task: need 1 <= min_len <= max_len");
  if (ood_min_len < 1 || ood_min_len > ood_max_len) fail(ErrorKind::kConfig, "task: need 1 <= ood_min_len <= ood_max_len");
  if (!(ood_overlap >= 0.0 && ood_overlap < 1.0)) fail(ErrorKind::kConfig, "task: ood_overlap must be in [0, 1)");
  if (in_domain_tokens() < 1) fail(ErrorKind::kConfig, "task: vocabulary too small for an in-domain region");
}

std::size_t TaskSpec::in_domain_tokens() const {
  // Both regions have R ids and the second starts (1 - overlap) * R later.
  return static_cast<std::size_t>(std::floor(static_cast<double>(content_tokens()) / (2.0 - ood_overlap)));
}

int TaskSpec::ood_first_token() const {
  const double r = static_cast<double>(in_domain_tokens());
  return 3 + static_cast<int>(std::llround((1.0 - ood_overlap) * r));
}

std::vector<int> TaskSpec::translate(const std::vector<int>& source) const {
  std::vector<int> c;
  c.reserve(source.size());
  for (int t : source) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) fail(ErrorKind::kArgument, "task: token out of range");
    c.push_back(cipher[t]);
  }
  return reorder(c, reorder_window);
}

std::vector<int> TaskSpec::inverse(const std::vector<int>& target) const {
  std::vector<int> inv(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) inv[cipher[i]] = static_cast<int>(i);
  std::vector<int> out = reorder(target, reorder_window);
  for (int& t : out) t = inv.at(t);
  return out;
}

nlohmann::json TaskSpec::to_json() const {
  return {{"vocab_size", vocab_size},   {"cipher", cipher},       {"reorder_window", reorder_window},
          {"min_len", min_len},         {"max_len", max_len},     {"seed", seed},
          {"ood_overlap", ood_overlap}, {"ood_min_len", ood_min_len}, {"ood_max_len", ood_max_len}};
}

TaskSpec TaskSpec::from_json(const nlohmann::json& j) {
  TaskSpec t;
  try {
    t.vocab_size = j.at("vocab_size").get<std::size_t>();
    t.cipher = j.at("cipher").get<std::vector<int>>();
    t.reorder_window = j.value("reorder_window", t.reorder_window);
    t.min_len = j.value("min_len", t.min_len);
    t.max_len = j.value("max_len", t.max_len);
    t.seed = j.value("seed", t.seed);
    t.ood_overlap = j.value("ood_overlap", t.ood_overlap);
    t.ood_min_len = j.value("ood_min_len", t.ood_min_len);
    t.ood_max_len = j.value("ood_max_len", t.ood_max_len);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("task: ") + e.what());
  }
  t.validate();
  return t;
}

namespace {

std::vector<int> draw_source(Rng& rng, std::size_t min_len, std::size_t max_len, int first, std::size_t count) {
  const std::size_t len = min_len + rng.below(max_len - min_len + 1);
  std::vector<int> s(len);
  for (auto& t : s) t = first + static_cast<int>(rng.below(count));
  return s;
}

}  // namespace

ParallelCorpus gen_corpus(const TaskSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) fail(ErrorKind::kArgument, "gen_corpus: n must be >= 1");
  Rng rng(seed);
  ParallelCorpus c;
  c.segments.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto src = draw_source(rng, spec.min_len, spec.max_len, 3, spec.in_domain_tokens());
    c.segments.push_back({src, spec.translate(src), Provenance::kAuthentic});
  }
  return c;
}

ParallelCorpus gen_ood_corpus(const TaskSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) fail(ErrorKind::kArgument, "gen_ood_corpus: n must be >= 1");
  Rng rng(seed ^ 0x6f6f64ULL);
  const std::size_t region = spec.in_domain_tokens();
  const int first = spec.ood_first_token();
  const int in_domain_end = 3 + static_cast<int>(region);
  const int ood_end = std::min(first + static_cast<int>(region), static_cast<int>(spec.vocab_size));
  if (ood_end <= in_domain_end) fail(ErrorKind::kConfig, "task: out-of-domain region has no exclusive ids");
  ParallelCorpus c;
  c.segments.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto src = draw_source(rng, spec.ood_min_len, spec.ood_max_len, first, static_cast<std::size_t>(ood_end - first));
    if (std::none_of(src.begin(), src.end(), [&](int t) { return t >= in_domain_end; })) {
      src[rng.below(src.size())] = in_domain_end + static_cast<int>(rng.below(static_cast<std::uint64_t>(ood_end - in_domain_end)));
    }
    c.segments.push_back({src, spec.translate(src), Provenance::kOutOfDomain});
  }
  return c;
}

ParallelCorpus train_test_split(const ParallelCorpus& corpus, std::size_t test_size, std::uint64_t seed,
                                std::size_t dev_size) {
  const std::size_t n = corpus.size();
  if (test_size >= n) {
    fail(ErrorKind::kArgument, "train_test_split: test_size " + std::to_string(test_size) + " must be < corpus size " +
                                   std::to_string(n));
  }
  if (test_size + dev_size >= n) {
    fail(ErrorKind::kArgument, "train_test_split: test_size + dev_size leaves no training data");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
  ParallelCorpus out;
  out.segments = corpus.segments;
  auto take = [&](std::size_t from, std::size_t to) {
    std::vector<std::size_t> v(idx.begin() + static_cast<std::ptrdiff_t>(from), idx.begin() + static_cast<std::ptrdiff_t>(to));
    std::sort(v.begin(), v.end());
    return v;
  };
  out.splits["test"] = take(0, test_size);
  out.splits["dev"] = take(test_size, test_size + dev_size);
  out.splits["train"] = take(test_size + dev_size, n);
  return out;
}

// ---- JSONL -------------------------------------------------------------------

void save_jsonl(const ParallelCorpus& corpus, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  for (const auto& s : corpus.segments) {
    const nlohmann::json j = {{"src", render(s.source)}, {"tgt", render(s.target)}, {"provenance", provenance_name(s.provenance)}};
    os << j.dump() << '\n';
  }
  const std::string sidecar = path + ".splits.json";
  if (!corpus.splits.empty()) {
    std::ofstream ss(sidecar, std::ios::binary);
    if (!ss) fail(ErrorKind::kIo, "cannot open '" + sidecar + "' for writing");
    ss << nlohmann::json(corpus.splits).dump(1) << '\n';
  } else {
    std::error_code ec;
    std::filesystem::remove(sidecar, ec);
  }
  if (!os) fail(ErrorKind::kIo, "write to '" + path + "' failed");
}

ParallelCorpus parse_jsonl(const std::string& text) {
  ParallelCorpus c;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Segment s;
      s.source = parse(j.at("src").get<std::string>());
      s.target = parse(j.at("tgt").get<std::string>());
      s.provenance = parse_provenance(j.value("provenance", std::string("authentic")));
      if (s.source.empty()) fail(ErrorKind::kFormat, "empty source");
      c.segments.push_back(std::move(s));
    } catch (const std::exception& e) {
      fail(ErrorKind::kFormat, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

ParallelCorpus load_jsonl(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  ParallelCorpus c = parse_jsonl(buf.str());
  const std::string sidecar = path + ".splits.json";
  if (std::filesystem::exists(sidecar)) {
    std::ifstream ss(sidecar, std::ios::binary);
    try {
      c.splits = nlohmann::json::parse(ss).get<std::map<std::string, std::vector<std::size_t>>>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, "'" + sidecar + "': " + e.what());
    }
    c.validate_splits();
  }
  return c;
}

}  // namespace prunekit::data
