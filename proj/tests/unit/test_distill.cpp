// Copyright 2026 The prunekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "distill/distill.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace prunekit;
using namespace prunekit::data;
using namespace prunekit::distill;

namespace {

std::vector<Segment> authentic_784() {
  const auto c = train_test_split(gen_corpus(TaskSpec::make(40, 3, 1), 884, 1), 100, 0, 0);
  return c.split("train");
}

// Distilled copy of `segs`; every segment with index % every == 0 gets a
// changed target.
std::vector<Segment> distilled_from(const std::vector<Segment>& segs, std::size_t every) {
  std::vector<Segment> out;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    Segment s = segs[i];
    s.provenance = Provenance::kDistilled;
    if (every && i % every == 0) s.target.push_back(3);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_SUITE("distill.augment") {
  TEST_CASE("collision arithmetic: n, 1.5n, 2n") {
    const auto a = authentic_784();
    REQUIRE(a.size() == 784);
    CHECK(augment(a, distilled_from(a, 0)).size() == 784);
    CHECK(augment(a, distilled_from(a, 2)).size() == 1176);
    CHECK(augment(a, distilled_from(a, 1)).size() == 1568);
  }

  TEST_CASE("authentic copies survive and order is stable") {
    const auto a = authentic_784();
    const auto d = distilled_from(a, 2);
    const auto out = augment(a, d);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(out.segments[i] == a[i]);
    std::size_t j = a.size();
    for (std::size_t i = 0; i < d.size(); i += 2) CHECK(out.segments[j++] == d[i]);
    CHECK(out.size() <= a.size() + d.size());
  }

  TEST_CASE("idempotence") {
    const auto a = authentic_784();
    const auto once = augment(a, distilled_from(a, 3));
    CHECK(augment(once.segments, {}) == once);
  }

  TEST_CASE("duplicates within one side are removed") {
    const Segment s{{3, 4}, {4, 3}, Provenance::kAuthentic};
    CHECK(augment({s, s, s}, {}).size() == 1);
  }

  TEST_CASE("target-only key") {
    const Segment a{{3, 4}, {5, 6}, Provenance::kAuthentic};
    const Segment d{{7, 8}, {5, 6}, Provenance::kDistilled};
    CHECK(augment({a}, {d}).size() == 2);
    CHECK(augment({a}, {d}, DedupKey::kTarget).size() == 1);
  }
}

TEST_SUITE("distill.oversample") {
  TEST_CASE("factor 1 is the identity") {
    ParallelCorpus c;
    c.segments = authentic_784();
    CHECK(oversample(c, {Provenance::kAuthentic}, 1).segments == c.segments);
  }

  TEST_CASE("matching segments repeat adjacently, others once") {
    ParallelCorpus c;
    for (int i = 0; i < 10; ++i) c.segments.push_back({{3 + i}, {3 + i}, Provenance::kAuthentic});
    for (int i = 0; i < 5; ++i) c.segments.push_back({{20 + i}, {20 + i}, Provenance::kOutOfDomain});
    const auto o = oversample(c, {Provenance::kAuthentic}, 10);
    CHECK(o.size() == 105);
    for (int i = 0; i < 10; ++i) {
      for (int k = 0; k < 10; ++k) CHECK(o.segments[i * 10 + k] == c.segments[i]);
    }
    for (int i = 0; i < 5; ++i) CHECK(o.segments[100 + i] == c.segments[10 + i]);
    try {
      oversample(c, {Provenance::kAuthentic}, 0);
      FAIL("factor 0 accepted");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kArgument);
    }
  }

  TEST_CASE("shuffle is a seeded permutation") {
    ParallelCorpus c;
    c.segments = authentic_784();
    const auto s1 = shuffled(c, 4), s2 = shuffled(c, 4);
    CHECK(s1 == s2);
    CHECK(s1.segments != c.segments);
    auto sorted = [](std::vector<Segment> v) {
      std::sort(v.begin(), v.end(), [](const Segment& a, const Segment& b) { return dedup_key(a) < dedup_key(b); });
      return v;
    };
    CHECK(sorted(s1.segments) == sorted(c.segments));
  }
}

TEST_SUITE("distill.generate") {
  TEST_CASE("converged copy teacher reproduces its sources") {
    model::ModelConfig c = testing::tiny_config(1, 1);
    c.d_model = 32;
    c.n_heads = 4;
    c.d_ff = 64;
    Rng rng(2);
    auto teacher = model::TransformerModel::build(c, rng);
    const auto data = testing::copy_examples(12, c.vocab_size, 3, 2, 4);
    model::TrainConfig tc;
    tc.epochs = 150;
    tc.learning_rate = 3e-3;
    tc.weight_decay = 0;
    model::train_full(teacher, data, tc);
    REQUIRE(model::evaluate_loss(teacher, data) < 0.05);
    std::vector<std::vector<int>> srcs;
    for (const auto& ex : data) srcs.push_back(ex.source);
    const auto kd = generate_kd(teacher, srcs, 16);
    REQUIRE(kd.size() == srcs.size());
    for (std::size_t i = 0; i < kd.size(); ++i) {
      CHECK(kd[i].provenance == Provenance::kDistilled);
      CHECK(kd[i].source == srcs[i]);
      CHECK(kd[i].target == srcs[i]);
    }
  }

  TEST_CASE("empty and repeated sources") {
    const auto m = testing::tiny_model(3);
    CHECK(generate_kd(m, {}).empty());
    const std::vector<std::vector<int>> same = {{3, 4, 5}, {3, 4, 5}};
    const auto kd = generate_kd(m, same, 8);
    CHECK(kd[0].target == kd[1].target);
  }

  TEST_CASE("failures name the segment index") {
    const auto m = testing::tiny_model(3);
    const std::vector<std::vector<int>> srcs = {{3, 4}, {3, 99}};
    try {
      generate_kd(m, srcs, 8);
      FAIL("bad source accepted");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("segment 1") != std::string::npos);
    }
  }
}
