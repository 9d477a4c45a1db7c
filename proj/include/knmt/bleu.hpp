#pragma once

// Corpus BLEU with multi-bleu semantics: single reference, clipped n-gram
// precisions up to order 4, no smoothing, brevity penalty exp(1 − r/h).

#include <array>
#include <span>
#include <string>

#include "knmt/vocab.hpp"

namespace knmt {

struct BleuReport {
  double bleu = 0.0;                     // percent
  std::array<double, 4> precisions{};    // percent, per order
  std::array<std::size_t, 4> matches{};  // clipped n-gram matches
  std::array<std::size_t, 4> totals{};   // hypothesis n-grams
  double brevity_penalty = 0.0;
  double ratio = 0.0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  /// "BLEU = xx.xx, p1/p2/p3/p4 (BP=…, ratio=…, hyp_len=…, ref_len=…)"
  std::string format() const;
};

/// Additive sufficient statistics of one or more sentence pairs.
struct BleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& o);
  BleuStats& operator-=(const BleuStats& o);
};

BleuStats sentence_stats(const Sentence& hypothesis, const Sentence& reference);
BleuReport bleu_from_stats(const BleuStats& stats, bool smooth = false);

/// `smooth` adds one to the matches and totals of orders above 1; only for
/// early stopping on very small validation sets.
BleuReport bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references,
                bool smooth = false);

}  // namespace knmt
