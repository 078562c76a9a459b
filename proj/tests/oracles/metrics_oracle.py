# Copyright 2026 The prunekit Authors
# SPDX-License-Identifier: Apache-2.0
"""Reference metric values from sacrebleu, frozen into tests/unit/test_metrics.cpp."""

import sacrebleu

CASES = [
    (["the cat sat on the mat", "a quick brown fox"], ["the cat is on the mat", "the quick brown fox jumps"]),
    (["ba de fi go ku", "la me ni"], ["ba de fi go ku la", "le me ni"]),
    (["Hello, world!", "It's a test."], ["Hello world!", "It is a test."]),
    (["one two three four five six", "seven eight"], ["one two three four five six", "seven eight nine"]),
    (["größer als", "naïve café"], ["größer als", "naive cafe"]),
    (["za zo zi ze zu za", "pa pe"], ["zo za ze zi za zu", "pe pa"]),
    (["the the the the the the the"], ["the cat and the dog and the end"]),
    (["sa ta va za ka la ma na", "bo bu bi be ba da"], ["sa ta va ka za la na ma pa", "bo bu bi be da ba"]),
]

for hyps, refs in CASES:
    b = sacrebleu.corpus_bleu(hyps, [refs], tokenize="none", smooth_method="none")
    be = sacrebleu.corpus_bleu(hyps, [refs], tokenize="none", smooth_method="exp")
    c = sacrebleu.corpus_chrf(hyps, [refs])
    cpp = sacrebleu.corpus_chrf(hyps, [refs], word_order=2)
    print(f"{hyps!r} {refs!r} bleu={b.score:.10f} bleu_exp={be.score:.10f} chrf={c.score:.10f} chrf++={cpp.score:.10f}")
