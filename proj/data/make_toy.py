#!/usr/bin/env python3
"""Generates the bundled toy translation task.

Word-by-word lexical translation over a small concept inventory. Parallel
data draws concepts from one Zipf ranking; monolingual, dev and test data
draw from the reversed ranking, so concepts that are frequent at test time
are rare in the parallel data.
"""

import argparse
import bisect
import os
import random


def lexicon(rng, n, alphabet):
    words = []
    seen = set()
    while len(words) < n:
        w = "".join(rng.choice(alphabet) for _ in range(rng.randint(2, 6)))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "toy"))
    ap.add_argument("--seed", type=int, default=2017)
    ap.add_argument("--concepts", type=int, default=60)
    ap.add_argument("--zipf", type=float, default=1.6)
    ap.add_argument("--train", type=int, default=1000)
    ap.add_argument("--mono", type=int, default=3000)
    ap.add_argument("--dev", type=int, default=100)
    ap.add_argument("--test", type=int, default=200)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    src_lex = lexicon(rng, args.concepts, "abcdefgh")
    tgt_lex = lexicon(rng, args.concepts, "mnoprstu")
    cdf = []
    z = 0.0
    for rank in range(args.concepts):
        z += 1.0 / (rank + 1) ** args.zipf
        cdf.append(z)

    def draw(shifted):
        r = min(bisect.bisect_left(cdf, rng.random() * z), args.concepts - 1)
        return args.concepts - 1 - r if shifted else r

    def pairs(n, shifted):
        out = []
        for _ in range(n):
            ids = [draw(shifted) for _ in range(rng.randint(3, 7))]
            out.append((" ".join(src_lex[i] for i in ids), " ".join(tgt_lex[i] for i in ids)))
        return out

    os.makedirs(args.out, exist_ok=True)

    def write(name, lines):
        with open(os.path.join(args.out, name), "w") as f:
            f.writelines(line + "\n" for line in lines)

    for name, n, shifted in (("train", args.train, False), ("dev", args.dev, True), ("test", args.test, True)):
        data = pairs(n, shifted)
        write(name + ".src", [s for s, _ in data])
        write(name + ".tgt", [t for _, t in data])
    write("mono.tgt", [t for _, t in pairs(args.mono, True)])


if __name__ == "__main__":
    main()
