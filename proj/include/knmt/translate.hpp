#pragma once

// Corpus-level decoding shared by the command-line tools and the toy
// experiments.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "knmt/search.hpp"

namespace knmt {

struct DecodeConfig {
  std::size_t beam = 12;
  /// Decoder step budget; 0 means 2·|source| + 10.
  std::size_t max_len = 0;
  bool length_norm = true;
  std::size_t factor_k = 3;
  bool greedy = false;
  bool geometric_mean = false;
  std::size_t jobs = 1;

  /// False if `key` is not a decoding key; ConfigError on bad values.
  bool set(const std::string& key, const std::string& value);
  std::vector<std::pair<std::string, std::string>> items() const;
  void validate() const;
  SearchOptions options(std::size_t source_len) const;
};

/// Decodes every source (ids without eos). Greedy decoding yields one
/// hypothesis per sentence; factored members go through the factored beam.
/// Sentences are spread over `config.jobs` threads; output order is kept.
template <typename Real>
std::vector<NBestList> decode_corpus(std::span<const Seq2SeqModel<Real>* const> members,
                                     const std::vector<std::vector<int>>& sources,
                                     const DecodeConfig& config);

/// Target text of a hypothesis. Factored hypotheses become "lemma|factor"
/// tokens; with `merge_subwords` "@@" pieces are joined first.
template <typename Real>
Sentence hypothesis_text(const Seq2SeqModel<Real>& model, const Hypothesis& h,
                         bool merge_subwords);

/// Lemma and factor streams of a factored hypothesis (pieces kept).
template <typename Real>
std::pair<Sentence, Sentence> factored_streams(const Seq2SeqModel<Real>& model,
                                               const Hypothesis& h);

}  // namespace knmt
