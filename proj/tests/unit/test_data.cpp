// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "data/corpus.hpp"
#include "doctest.h"

using namespace prunekit;
using namespace prunekit::data;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("pk_test_" + name)).string();
}

void write_file(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

TEST_SUITE("data.words") {
  TEST_CASE("rendering round-trips") {
    CHECK(token_word(3) == "ba");
    CHECK(word_token("ba") == 3);
    CHECK(word_token("zz") == -1);
    for (int id = 3; id < 600; ++id) CHECK(word_token(token_word(id)) == id);
    const std::vector<int> ids = {3, 17, 72, 73, 250};
    CHECK(parse(render(ids)) == ids);
    CHECK(parse("") == std::vector<int>{});
    CHECK_THROWS_AS(parse("ba qq"), Error);
  }
}

TEST_SUITE("data.task") {
  TEST_CASE("identity cipher with window 0 is the copy task") {
    const auto spec = TaskSpec::make(40, 0, 1, true);
    const auto c = gen_corpus(spec, 50, 2);
    CHECK(c.size() == 50);
    for (const auto& s : c.segments) CHECK(s.target == s.source);
  }

  TEST_CASE("cipher is a bijection fixing the reserved ids") {
    const auto spec = TaskSpec::make(40, 3, 9);
    CHECK(spec.cipher[0] == 0);
    CHECK(spec.cipher[1] == 1);
    CHECK(spec.cipher[2] == 2);
    std::set<int> image(spec.cipher.begin(), spec.cipher.end());
    CHECK(image.size() == 40);
    CHECK(*image.rbegin() == 39);
    CHECK(spec.cipher != TaskSpec::make(40, 3, 0, true).cipher);
  }

  TEST_CASE("reorder reverses blocks and is an involution") {
    const std::vector<int> x = {1, 2, 3, 4, 5, 6, 7};
    CHECK(reorder(x, 3) == std::vector<int>{3, 2, 1, 6, 5, 4, 7});
    CHECK(reorder(x, 1) == x);
    CHECK(reorder(x, 0) == x);
    for (std::size_t w = 0; w < 9; ++w) CHECK(reorder(reorder(x, w), w) == x);
  }

  TEST_CASE("inverse recovers sources for any spec") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto spec = TaskSpec::make(30 + 10 * seed, seed % 4, seed);
      const auto c = gen_corpus(spec, 100, seed + 1);
      for (const auto& s : c.segments) {
        CHECK(spec.inverse(s.target) == s.source);
        CHECK(spec.translate(s.source) == s.target);
        CHECK(s.source.size() >= spec.min_len);
        CHECK(s.source.size() <= spec.max_len);
      }
    }
  }

  TEST_CASE("generation is deterministic under its seed") {
    const auto spec = TaskSpec::make(40, 3, 1);
    CHECK(gen_corpus(spec, 200, 5) == gen_corpus(spec, 200, 5));
    CHECK_FALSE(gen_corpus(spec, 200, 5) == gen_corpus(spec, 200, 6));
    CHECK(gen_ood_corpus(spec, 200, 5) == gen_ood_corpus(spec, 200, 5));
  }

  TEST_CASE("spec JSON round-trip and validation") {
    const auto spec = TaskSpec::make(50, 2, 3);
    const auto back = TaskSpec::from_json(spec.to_json());
    CHECK(back.cipher == spec.cipher);
    CHECK(back.reorder_window == 2);
    TaskSpec bad = spec;
    bad.cipher[5] = bad.cipher[6];
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = spec;
    bad.ood_overlap = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);
  }
}

TEST_SUITE("data.ood") {
  TEST_CASE("default regions overlap by half") {
    const auto spec = TaskSpec::make(40, 3, 1);
    CHECK(spec.ood_overlap == 0.5);
    CHECK(spec.in_domain_tokens() == 24);
    CHECK(spec.ood_first_token() == 15);
    const int in_end = 3 + static_cast<int>(spec.in_domain_tokens());
    const int shared = in_end - spec.ood_first_token();
    CHECK(static_cast<double>(shared) / static_cast<double>(spec.in_domain_tokens()) == 0.5);
  }

  TEST_CASE("shifted vocabulary and lengths, disjoint under the dedup key") {
    const auto spec = TaskSpec::make(40, 3, 1);
    const auto in = gen_corpus(spec, 884, 1);
    const auto ood = gen_ood_corpus(spec, 1000, 2);
    CHECK(ood.size() == 1000);
    const int in_end = 3 + static_cast<int>(spec.in_domain_tokens());
    std::set<std::string> keys;
    for (const auto& s : in.segments) {
      keys.insert(dedup_key(s));
      for (int t : s.source) CHECK(t < in_end);
    }
    for (const auto& s : ood.segments) {
      CHECK(s.provenance == Provenance::kOutOfDomain);
      CHECK(s.source.size() >= spec.ood_min_len);
      CHECK(s.source.size() <= spec.ood_max_len);
      CHECK(std::any_of(s.source.begin(), s.source.end(), [&](int t) { return t >= in_end; }));
      for (int t : s.source) CHECK(t >= spec.ood_first_token());
      CHECK(spec.translate(s.source) == s.target);
      CHECK(keys.count(dedup_key(s)) == 0);
    }
  }

  TEST_CASE("sweep sizes") {
    const auto spec = TaskSpec::make(40, 3, 1);
    for (std::size_t n : {1000, 5000, 8000, 10000}) CHECK(gen_ood_corpus(spec, n, 3).size() == n);
  }
}

TEST_SUITE("data.split") {
  TEST_CASE("884 with test 100 leaves 784 for training and dev") {
    const auto c = gen_corpus(TaskSpec::make(40, 3, 1), 884, 1);
    const auto s = train_test_split(c, 100, 0, 50);
    CHECK(s.splits.at("test").size() == 100);
    CHECK(s.splits.at("dev").size() == 50);
    CHECK(s.splits.at("train").size() == 734);
    CHECK(s.splits.at("train").size() + s.splits.at("dev").size() == 784);
    CHECK(train_test_split(c, 100, 0, 0).splits.at("train").size() == 784);
    std::vector<std::size_t> all;
    for (const auto& [name, idx] : s.splits) {
      CHECK(std::is_sorted(idx.begin(), idx.end()));
      all.insert(all.end(), idx.begin(), idx.end());
    }
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
    CHECK(all.size() == 884);
    CHECK_NOTHROW(s.validate_splits());
  }

  TEST_CASE("fixed seed gives the identical split") {
    const auto c = gen_corpus(TaskSpec::make(40, 3, 1), 300, 1);
    CHECK(train_test_split(c, 100, 0).splits == train_test_split(c, 100, 0).splits);
    CHECK(train_test_split(c, 100, 0).splits != train_test_split(c, 100, 1).splits);
  }

  TEST_CASE("oversized test split is an argument error") {
    const auto c = gen_corpus(TaskSpec::make(40, 3, 1), 100, 1);
    try {
      train_test_split(c, 100, 0);
      FAIL("accepted test_size >= n");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kArgument);
    }
  }

  TEST_CASE("overlapping splits are rejected") {
    auto c = gen_corpus(TaskSpec::make(40, 3, 1), 10, 1);
    c.splits["train"] = {0, 1, 2};
    c.splits["test"] = {2, 3};
    CHECK_THROWS_AS(c.validate_splits(), Error);
  }
}

TEST_SUITE("data.jsonl") {
  TEST_CASE("round-trip keeps provenance and splits") {
    auto c = train_test_split(gen_corpus(TaskSpec::make(40, 3, 1), 200, 1), 20, 0, 10);
    c.segments[3].provenance = Provenance::kDistilled;
    c.segments[4].provenance = Provenance::kOutOfDomain;
    const auto path = temp_path("corpus.jsonl");
    save_jsonl(c, path);
    CHECK(load_jsonl(path) == c);
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".splits.json");
  }

  TEST_CASE("empty file is an empty corpus") {
    const auto path = temp_path("empty.jsonl");
    write_file(path, "");
    const auto c = load_jsonl(path);
    CHECK(c.size() == 0);
    CHECK(c.splits.empty());
    std::filesystem::remove(path);
  }

  TEST_CASE("bad JSON on line 3 names line 3") {
    const std::string good = R"({"src": "ba be", "tgt": "be ba", "provenance": "authentic"})";
    try {
      parse_jsonl(good + "\n" + good + "\n{not json\n" + good + "\n");
      FAIL("accepted bad JSON");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kFormat);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_jsonl(R"({"src": "ba", "tgt": "ba", "provenance": "other"})"), Error);
    CHECK(parse_jsonl(good + "\n\n").size() == 1);
  }
}
