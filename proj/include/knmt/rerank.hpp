#pragma once

// Weighted n-best rescoring and dev-BLEU weight tuning.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "knmt/lm.hpp"
#include "knmt/model.hpp"
#include "knmt/nbest.hpp"

namespace knmt {

/// Named weights in a fixed order.
class RerankWeights {
 public:
  RerankWeights() = default;
  RerankWeights(std::vector<std::string> names, std::vector<double> values);
  static RerankWeights uniform(const std::vector<std::string>& names, double value = 1.0);

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  double get(const std::string& name) const;
  void set(const std::string& name, double value);
  std::size_t size() const { return names_.size(); }

  /// ContractError unless at least one weight is nonzero and all are finite.
  void validate() const;

  /// "name = value" lines.
  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static RerankWeights load(const std::string& path);

  bool operator==(const RerankWeights&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<double> values_;
};

/// Σ weight · feature; ContractError naming a feature the entry lacks.
double weighted_total(const NBestEntry& e, const RerankWeights& w);

struct NamedScorer {
  std::string name;
  /// (sentence index, hypothesis) -> score
  std::function<double(std::size_t, const NBestEntry&)> score;
};

/// Token count of the hypothesis.
NamedScorer word_count_scorer(std::string name = "wc");

/// Σ ln P under `lm`. With `merge_subwords` the hypothesis is detokenized
/// from "@@" pieces to words before scoring.
template <typename Real>
NamedScorer lm_scorer(std::string name, const LanguageModel<Real>& lm, bool merge_subwords = false);

/// Sentence log-probability (eos included) of the hypothesis given
/// `sources[index]`. Factored hypotheses are not supported.
template <typename Real>
NamedScorer nmt_scorer(std::string name, const Seq2SeqModel<Real>& model,
                       const std::vector<Sentence>& sources);

/// Adds each scorer's value as a feature. Hypotheses with a non-finite score
/// are dropped with a warning; returns the number dropped.
std::size_t add_features(std::vector<NBestEntry>& entries, const std::vector<NamedScorer>& scorers);

/// Recomputes totals from `weights` and stable-sorts each sentence's list
/// by descending total; sentence order is kept.
std::vector<NBestEntry> rerank(std::vector<NBestEntry> entries, const RerankWeights& weights);

/// add_features followed by rerank.
std::vector<NBestEntry> rescore_nbest(std::vector<NBestEntry> entries,
                                      const std::vector<NamedScorer>& scorers,
                                      const RerankWeights& weights);

/// Highest-total entry per sentence (first on ties); empty lists give an
/// empty sentence.
std::vector<Sentence> one_best(const std::vector<std::vector<NBestEntry>>& lists,
                               const RerankWeights& weights);

struct TuneOptions {
  std::size_t restarts = 3;  // the first start is the uniform point
  std::size_t sweeps = 6;    // coordinate cycles per start
  std::size_t grid = 21;     // bracketing points per line search
  std::size_t golden_steps = 24;
  std::uint64_t seed = 1;
};

struct TuneResult {
  RerankWeights weights;
  double bleu = 0.0;
  double uniform_bleu = 0.0;
};

/// Coordinate ascent on dev-set corpus BLEU of the reranked 1-best, with a
/// golden-section refinement around the best grid point of each line.
/// Never returns weights scoring below the uniform start.
TuneResult tune_weights(const std::vector<std::vector<NBestEntry>>& lists,
                        const std::vector<Sentence>& references,
                        const std::vector<std::string>& feature_names,
                        const TuneOptions& options = {});

}  // namespace knmt
