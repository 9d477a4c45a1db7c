#!/usr/bin/env python3
"""Line-for-line port of Moses multi-bleu.perl (single reference, no
lowercasing). Used to freeze the expected fixture score."""
import math
import sys
from collections import Counter


def score(hyp_lines, ref_lines):
    correct = [0] * 5
    total = [0] * 5
    length_translation = 0
    length_reference = 0
    for hyp, ref in zip(hyp_lines, ref_lines):
        words = hyp.split()
        refw = ref.split()
        length_translation += len(words)
        length_reference += len(refw)
        ref_ngram = Counter()
        for n in range(1, 5):
            for start in range(len(refw) - n + 1):
                ref_ngram[" ".join(refw[start:start + n])] += 1
        hyp_ngram = Counter()
        for n in range(1, 5):
            for start in range(len(words) - n + 1):
                hyp_ngram[" ".join(words[start:start + n])] += 1
        for ngram, count in hyp_ngram.items():
            n = len(ngram.split(" "))
            total[n] += count
            if ngram in ref_ngram:
                correct[n] += min(count, ref_ngram[ngram])
    brevity_penalty = 1.0
    bleu = [0.0] * 5
    for n in range(1, 5):
        if total[n]:
            bleu[n] = correct[n] / total[n]
    if length_translation < length_reference:
        brevity_penalty = math.exp(1 - length_reference / length_translation)
    if min(bleu[1:]) == 0:
        b = 0.0
    else:
        b = brevity_penalty * math.exp(sum(math.log(bleu[n]) for n in range(1, 5)) / 4)
    return (100 * b, [100 * x for x in bleu[1:]], brevity_penalty,
            length_translation / length_reference, length_translation, length_reference)


if __name__ == "__main__":
    with open(sys.argv[1]) as h, open(sys.argv[2]) as r:
        b, p, bp, ratio, hl, rl = score(h.read().splitlines(), r.read().splitlines())
    print("BLEU = %.2f, %.1f/%.1f/%.1f/%.1f (BP=%.3f, ratio=%.3f, hyp_len=%d, ref_len=%d)"
          % (b, p[0], p[1], p[2], p[3], bp, ratio, hl, rl))
    print("%.10f" % b)
