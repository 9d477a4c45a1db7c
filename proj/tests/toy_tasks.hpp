#pragma once

// Synthetic translation tasks used by the trainer tests and the acceptance
// runner.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "knmt/corpus.hpp"
#include "knmt/rng.hpp"

namespace knmt::testing {

/// Identity pairs over `vocab` word types "w0".."w{vocab-1}".
inline ParallelCorpus copy_corpus(std::size_t pairs, std::size_t vocab, std::uint64_t seed,
                                  std::size_t min_len = 3, std::size_t max_len = 10) {
  Rng rng = Rng::named(seed, "copy-task");
  ParallelCorpus c;
  for (std::size_t i = 0; i < pairs; ++i) {
    Sentence s;
    const std::size_t n = min_len + rng.below(max_len - min_len + 1);
    for (std::size_t j = 0; j < n; ++j) s.push_back("w" + std::to_string(rng.below(vocab)));
    c.add(s, s);
  }
  return c;
}

/// Random lowercase words over a small alphabet.
inline std::vector<std::string> toy_lexicon(std::size_t words, std::uint64_t seed,
                                            std::size_t alphabet = 8) {
  Rng rng = Rng::named(seed, "lexicon");
  std::vector<std::string> out;
  while (out.size() < words) {
    std::string w;
    const std::size_t n = 2 + rng.below(5);
    for (std::size_t i = 0; i < n; ++i) w += static_cast<char>('a' + rng.below(alphabet));
    if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
  }
  return out;
}

/// Word-order reversal: the target lists the source words back to front.
inline ParallelCorpus reversal_corpus(std::size_t pairs, const std::vector<std::string>& lexicon,
                                      std::uint64_t seed, std::size_t min_len = 3,
                                      std::size_t max_len = 7) {
  Rng rng = Rng::named(seed, "reverse-task");
  ParallelCorpus c;
  for (std::size_t i = 0; i < pairs; ++i) {
    Sentence s;
    const std::size_t n = min_len + rng.below(max_len - min_len + 1);
    for (std::size_t j = 0; j < n; ++j) s.push_back(lexicon[rng.below(lexicon.size())]);
    c.add(s, Sentence(s.rbegin(), s.rend()));
  }
  return c;
}

struct ShiftedTask {
  ParallelCorpus train, dev, test;
  std::vector<Sentence> mono;  // target side only
};

/// Word-by-word lexical translation over `concepts` source/target word
/// pairs. Training pairs draw concepts by a Zipf ranking; monolingual, dev
/// and test data use the reversed ranking, so concepts frequent at test time
/// are rare in the parallel data.
inline ShiftedTask shifted_lexical_task(std::size_t concepts, std::size_t train,
                                        std::size_t mono, std::size_t dev, std::size_t test,
                                        std::uint64_t seed, double zipf = 1.6) {
  const auto src_lex = toy_lexicon(concepts, seed);
  auto tgt_lex = toy_lexicon(concepts, seed + 1);
  for (auto& w : tgt_lex)
    for (auto& ch : w) ch = "mnoprstu"[ch - 'a'];
  std::vector<double> cdf;
  double z = 0;
  for (std::size_t r = 0; r < concepts; ++r) cdf.push_back(z += 1.0 / std::pow(r + 1.0, zipf));
  Rng rng = Rng::named(seed, "shifted-task");
  const auto pairs = [&](std::size_t n, bool shifted) {
    ParallelCorpus c;
    for (std::size_t i = 0; i < n; ++i) {
      Sentence s, t;
      const std::size_t len = 3 + rng.below(5);
      for (std::size_t j = 0; j < len; ++j) {
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), rng.uniform() * z);
        std::size_t r = std::min<std::size_t>(it - cdf.begin(), concepts - 1);
        if (shifted) r = concepts - 1 - r;
        s.push_back(src_lex[r]);
        t.push_back(tgt_lex[r]);
      }
      c.add(s, t);
    }
    return c;
  };
  ShiftedTask task;
  task.train = pairs(train, false);
  task.mono = pairs(mono, true).target;
  task.dev = pairs(dev, true);
  task.test = pairs(test, true);
  return task;
}

}  // namespace knmt::testing
