// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "model/train.hpp"

namespace prunekit::data {

// Token id <-> word rendering. Ids 0..2 are pad, bos, eos; content ids map to
// pronounceable syllable words ("ba", "be", ..., "baba", ...).
std::string token_word(int id);
int word_token(const std::string& word);  // -1 when not a vocabulary word
std::string render(const std::vector<int>& ids);
// Throws an argument error on unknown words.
std::vector<int> parse(const std::string& text);

enum class Provenance : std::uint8_t { kAuthentic, kDistilled, kOutOfDomain };

const char* provenance_name(Provenance p);
Provenance parse_provenance(const std::string& s);

struct Segment {
  std::vector<int> source;
  std::vector<int> target;
  Provenance provenance = Provenance::kAuthentic;

  bool operator==(const Segment&) const = default;
};

enum class DedupKey { kPair, kTarget };

std::string dedup_key(const Segment& s, DedupKey mode = DedupKey::kPair);

struct ParallelCorpus {
  std::vector<Segment> segments;
  // Named index sets ("train", "dev", "test"); empty when unsplit.
  std::map<std::string, std::vector<std::size_t>> splits;

  std::size_t size() const { return segments.size(); }
  bool has_split(const std::string& name) const { return splits.count(name) > 0; }
  // Segments of a split; the whole corpus when name is empty.
  std::vector<Segment> split(const std::string& name) const;
  // Throws a config error when splits overlap or index out of range.
  void validate_splits() const;

  bool operator==(const ParallelCorpus&) const = default;
};

std::vector<model::TrainExample> to_examples(const std::vector<Segment>& segs);
std::vector<std::vector<int>> sources(const std::vector<Segment>& segs);
std::vector<std::string> rendered_targets(const std::vector<Segment>& segs);

// Synthetic translation task: target = reorder(cipher(source)). The cipher
// permutes content ids; reorder reverses consecutive blocks of
// reorder_window tokens (window <= 1 leaves order unchanged).
struct TaskSpec {
  std::size_t vocab_size = 40;
  std::vector<int> cipher;  // size vocab_size, fixes 0..2
  std::size_t reorder_window = 3;
  std::size_t min_len = 4;
  std::size_t max_len = 10;
  std::uint64_t seed = 0;
  // Fraction of the in-domain token region shared with the out-of-domain region.
  double ood_overlap = 0.5;
  std::size_t ood_min_len = 6;
  std::size_t ood_max_len = 12;

  // Random cipher drawn from seed; identity cipher when `copy` is set.
  static TaskSpec make(std::size_t vocab_size, std::size_t reorder_window, std::uint64_t seed, bool copy = false);
  void validate() const;

  std::size_t content_tokens() const { return vocab_size - 3; }
  // Number of content ids used by the in-domain generator, starting at id 3.
  std::size_t in_domain_tokens() const;
  // First id of the out-of-domain region.
  int ood_first_token() const;

  std::vector<int> translate(const std::vector<int>& source) const;
  std::vector<int> inverse(const std::vector<int>& target) const;

  nlohmann::json to_json() const;
  static TaskSpec from_json(const nlohmann::json& j);
};

std::vector<int> reorder(const std::vector<int>& tokens, std::size_t window);

ParallelCorpus gen_corpus(const TaskSpec& spec, std::size_t n, std::uint64_t seed);
// Same task on a shifted token region and longer lengths; every source holds
// at least one id outside the in-domain region.
ParallelCorpus gen_ood_corpus(const TaskSpec& spec, std::size_t n, std::uint64_t seed);

// Seeded uniform test sample; dev is carved from the remainder. Index sets
// are stored ascending.
ParallelCorpus train_test_split(const ParallelCorpus& corpus, std::size_t test_size = 100, std::uint64_t seed = 0,
                                std::size_t dev_size = 50);

// One JSON object per line: {"src", "tgt", "provenance"}; splits go to a
// "<path>.splits.json" sidecar.
void save_jsonl(const ParallelCorpus& corpus, const std::string& path);
ParallelCorpus load_jsonl(const std::string& path);
ParallelCorpus parse_jsonl(const std::string& text);

}  // namespace prunekit::data
