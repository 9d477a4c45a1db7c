#pragma once

// Greedy, beam and ensemble decoding for word and factored models.

#include <span>
#include <vector>

#include "knmt/model.hpp"

namespace knmt {

struct Hypothesis {
  std::vector<int> tokens;            // target ids; finished hypotheses end with eos
  std::vector<int> factors;           // factored: one per non-eos token
  std::vector<double> step_logprobs;  // one per scored step
  double logprob = 0.0;
  /// Reached max_len without eos; the appended eos carries no log-prob.
  bool forced = false;

  /// logprob, divided by the token count (eos included) when `length_norm`.
  double score(bool length_norm) const;
  /// tokens without the final eos.
  std::vector<int> words() const;
};

using NBestList = std::vector<Hypothesis>;

struct SearchOptions {
  std::size_t beam = 12;
  /// Maximum number of decoder steps, eos included.
  std::size_t max_len = 100;
  bool length_norm = true;
  std::size_t factor_k = 3;
  /// Ensembles: renormalized geometric instead of arithmetic mean.
  bool geometric_mean = false;
};

/// Argmax decoding; ties go to the lower token id. Factored models take
/// the argmax factor after each non-eos lemma.
template <typename Real>
Hypothesis greedy_decode(std::span<const Seq2SeqModel<Real>* const> members,
                         std::span<const int> src, std::size_t max_len,
                         bool geometric_mean = false);

template <typename Real>
Hypothesis greedy_decode(const Seq2SeqModel<Real>& model, std::span<const int> src,
                         std::size_t max_len) {
  const Seq2SeqModel<Real>* one[] = {&model};
  return greedy_decode<Real>(one, src, max_len);
}

/// Beam search over one model or an ensemble sharing vocabularies. Returns
/// every finished hypothesis (at most `beam`), best first.
template <typename Real>
NBestList beam_decode(std::span<const Seq2SeqModel<Real>* const> members,
                      std::span<const int> src, const SearchOptions& options);

template <typename Real>
NBestList beam_decode(const Seq2SeqModel<Real>& model, std::span<const int> src,
                      const SearchOptions& options) {
  const Seq2SeqModel<Real>* one[] = {&model};
  return beam_decode<Real>(one, src, options);
}

/// Lemma and factor streams in lockstep: each live hypothesis expands to the
/// top-`beam` lemmas crossed with the top-`factor_k` factors; an eos lemma
/// takes no factor and is scored by its own log-prob.
template <typename Real>
NBestList factored_beam_decode(std::span<const Seq2SeqModel<Real>* const> members,
                               std::span<const int> src, const SearchOptions& options);

template <typename Real>
NBestList factored_beam_decode(const Seq2SeqModel<Real>& model, std::span<const int> src,
                               const SearchOptions& options) {
  const Seq2SeqModel<Real>* one[] = {&model};
  return factored_beam_decode<Real>(one, src, options);
}

struct NextDistribution {
  std::vector<double> lemma;   // log-probs over the target vocabulary
  std::vector<double> factor;  // factored models only
};

/// Merged next-token log-distribution after feeding `prefix` (target ids,
/// bos excluded); the per-step quantity every search above ranks by.
template <typename Real>
NextDistribution next_log_probs(std::span<const Seq2SeqModel<Real>* const> members,
                                std::span<const int> src, std::span<const int> prefix,
                                bool geometric_mean = false);

/// Throws ConfigError unless all members share source, target and factor
/// vocabularies.
template <typename Real>
void check_ensemble(std::span<const Seq2SeqModel<Real>* const> members);

}  // namespace knmt
