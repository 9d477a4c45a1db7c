#include "knmt/rerank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "knmt/bleu.hpp"
#include "knmt/bpe.hpp"
#include "knmt/config.hpp"
#include "knmt/error.hpp"
#include "knmt/log.hpp"
#include "knmt/rng.hpp"
#include "knmt/search.hpp"

namespace knmt {

RerankWeights::RerankWeights(std::vector<std::string> names, std::vector<double> values)
    : names_(std::move(names)), values_(std::move(values)) {
  if (names_.size() != values_.size()) throw ContractError("rerank weights: names/values mismatch");
  for (std::size_t i = 0; i < names_.size(); ++i)
    for (std::size_t j = i + 1; j < names_.size(); ++j)
      if (names_[i] == names_[j]) throw ContractError("rerank weights: duplicate '" + names_[i] + "'");
}

RerankWeights RerankWeights::uniform(const std::vector<std::string>& names, double value) {
  return RerankWeights(names, std::vector<double>(names.size(), value));
}

double RerankWeights::get(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return values_[i];
  throw ContractError("rerank weights: no weight named '" + name + "'");
}

void RerankWeights::set(const std::string& name, double value) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) {
      values_[i] = value;
      return;
    }
  }
  names_.push_back(name);
  values_.push_back(value);
}

void RerankWeights::validate() const {
  bool nonzero = false;
  for (const double v : values_) {
    if (!std::isfinite(v)) throw ContractError("rerank weights: non-finite weight");
    nonzero |= v != 0.0;
  }
  if (!nonzero) throw ContractError("rerank weights: at least one weight must be nonzero");
}

void RerankWeights::save(std::ostream& out) const {
  for (std::size_t i = 0; i < names_.size(); ++i) out << names_[i] << " = " << format_real(values_[i]) << '\n';
}

void RerankWeights::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write weights '" + path + "'");
  save(out);
}

RerankWeights RerankWeights::load(const std::string& path) {
  RerankWeights w;
  for (const auto& e : read_config(path)) w.set(e.key, parse_real(e.key, e.value));
  w.validate();
  return w;
}

double weighted_total(const NBestEntry& e, const RerankWeights& w) {
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) total += w.values()[i] * e.feature(w.names()[i]);
  return total;
}

NamedScorer word_count_scorer(std::string name) {
  return {std::move(name), [](std::size_t, const NBestEntry& e) { return static_cast<double>(e.tokens.size()); }};
}

template <typename Real>
NamedScorer lm_scorer(std::string name, const LanguageModel<Real>& lm, bool merge_subwords) {
  return {std::move(name), [&lm, merge_subwords](std::size_t, const NBestEntry& e) {
            return merge_subwords ? lm.score(detokenize_bpe(e.tokens).words) : lm.score(e.tokens);
          }};
}

template <typename Real>
NamedScorer nmt_scorer(std::string name, const Seq2SeqModel<Real>& model,
                       const std::vector<Sentence>& sources) {
  if (model.factored()) throw ContractError("nmt_scorer: factored models are not supported");
  return {std::move(name), [&model, &sources](std::size_t i, const NBestEntry& e) {
            if (i >= sources.size()) {
              throw ContractError("nmt_scorer: n-best index " + std::to_string(i) + " has no source");
            }
            const auto src = model.source_vocab().encode(sources[i], false);
            const auto tgt = model.target_vocab().encode(e.tokens, false);
            if (tgt.empty()) {
              const Seq2SeqModel<Real>* one[] = {&model};
              return next_log_probs<Real>(one, src, {}).lemma[Vocabulary::kEos];
            }
            return -model.forward_loss(src, tgt) * static_cast<double>(tgt.size() + 1);
          }};
}

template NamedScorer lm_scorer(std::string, const LanguageModel<float>&, bool);
template NamedScorer lm_scorer(std::string, const LanguageModel<double>&, bool);
template NamedScorer nmt_scorer(std::string, const Seq2SeqModel<float>&, const std::vector<Sentence>&);
template NamedScorer nmt_scorer(std::string, const Seq2SeqModel<double>&, const std::vector<Sentence>&);

std::size_t add_features(std::vector<NBestEntry>& entries, const std::vector<NamedScorer>& scorers) {
  std::vector<NBestEntry> kept;
  std::size_t dropped = 0;
  for (auto& e : entries) {
    bool ok = true;
    for (const auto& s : scorers) {
      const double v = s.score(e.index, e);
      if (!std::isfinite(v)) {
        log_info("warning: dropping hypothesis of sentence ", e.index, ": scorer '", s.name,
                 "' returned a non-finite value");
        ok = false;
        break;
      }
      e.set_feature(s.name, v);
    }
    if (ok) {
      kept.push_back(std::move(e));
    } else {
      ++dropped;
    }
  }
  entries = std::move(kept);
  return dropped;
}

std::vector<NBestEntry> rerank(std::vector<NBestEntry> entries, const RerankWeights& weights) {
  weights.validate();
  for (auto& e : entries) e.total = weighted_total(e, weights);
  std::stable_sort(entries.begin(), entries.end(), [](const NBestEntry& a, const NBestEntry& b) {
    return a.index != b.index ? a.index < b.index : a.total > b.total;
  });
  return entries;
}

std::vector<NBestEntry> rescore_nbest(std::vector<NBestEntry> entries,
                                      const std::vector<NamedScorer>& scorers,
                                      const RerankWeights& weights) {
  add_features(entries, scorers);
  return rerank(std::move(entries), weights);
}

std::vector<Sentence> one_best(const std::vector<std::vector<NBestEntry>>& lists,
                               const RerankWeights& weights) {
  std::vector<Sentence> out;
  for (const auto& list : lists) {
    const NBestEntry* best = nullptr;
    double best_total = 0.0;
    for (const auto& e : list) {
      const double t = weighted_total(e, weights);
      if (!best || t > best_total) {
        best = &e;
        best_total = t;
      }
    }
    out.push_back(best ? best->tokens : Sentence{});
  }
  return out;
}

namespace {

// Feature matrix and per-hypothesis BLEU statistics of a dev set.
struct DevSet {
  std::size_t dims = 0;
  std::vector<std::vector<std::vector<double>>> features;  // [sentence][hyp][feature]
  std::vector<std::vector<BleuStats>> stats;              // [sentence][hyp]
  BleuStats empty_ref;                                     // reference lengths of empty lists

  double bleu(const std::vector<double>& w) const {
    BleuStats total = empty_ref;
    for (std::size_t s = 0; s < features.size(); ++s) {
      const auto& hyps = features[s];
      if (hyps.empty()) continue;
      std::size_t best = 0;
      double best_score = 0.0;
      for (std::size_t h = 0; h < hyps.size(); ++h) {
        double score = 0.0;
        for (std::size_t d = 0; d < dims; ++d) score += w[d] * hyps[h][d];
        if (h == 0 || score > best_score) {
          best = h;
          best_score = score;
        }
      }
      total += stats[s][best];
    }
    return bleu_from_stats(total).bleu;
  }
};

}  // namespace

TuneResult tune_weights(const std::vector<std::vector<NBestEntry>>& lists,
                        const std::vector<Sentence>& refs, const std::vector<std::string>& names,
                        const TuneOptions& opt) {
  if (names.empty()) throw ContractError("tune_weights: no features");
  if (lists.size() != refs.size()) {
    throw ContractError("tune_weights: " + std::to_string(lists.size()) + " n-best lists vs " +
                        std::to_string(refs.size()) + " references");
  }
  if (lists.empty()) throw ContractError("tune_weights: empty dev set");
  DevSet dev;
  dev.dims = names.size();
  for (std::size_t s = 0; s < lists.size(); ++s) {
    dev.features.emplace_back();
    dev.stats.emplace_back();
    if (lists[s].empty()) dev.empty_ref.ref_len += refs[s].size();
    for (const auto& e : lists[s]) {
      std::vector<double> f;
      for (const auto& n : names) f.push_back(e.feature(n));
      dev.features.back().push_back(std::move(f));
      dev.stats.back().push_back(sentence_stats(e.tokens, refs[s]));
    }
  }

  TuneResult result;
  result.weights = RerankWeights::uniform(names);
  result.uniform_bleu = result.bleu = dev.bleu(result.weights.values());
  Rng rng = Rng::named(opt.seed, "tune");
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;

  for (std::size_t start = 0; start < opt.restarts; ++start) {
    std::vector<double> w(names.size(), 1.0);
    if (start > 0)
      for (auto& x : w) x = rng.uniform(-1.0, 1.0);
    double score = dev.bleu(w);
    for (std::size_t sweep = 0; sweep < opt.sweeps; ++sweep) {
      bool moved = false;
      for (std::size_t d = 0; d < names.size(); ++d) {
        double scale = 1.0;
        for (const double x : w) scale = std::max(scale, std::abs(x));
        const double lo = -10.0 * scale, hi = 10.0 * scale;
        const auto at = [&](double v) {
          auto c = w;
          c[d] = v;
          return dev.bleu(c);
        };
        // Bracket on a grid, then refine inside the best cell's neighbours.
        const std::size_t n = std::max<std::size_t>(opt.grid, 3);
        double best_v = w[d], best_s = score;
        std::size_t best_i = n;
        for (std::size_t i = 0; i < n; ++i) {
          const double v = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
          const double sc = at(v);
          if (sc > best_s) {
            best_s = sc;
            best_v = v;
            best_i = i;
          }
        }
        if (best_i < n) {
          const double step = (hi - lo) / static_cast<double>(n - 1);
          double a = best_v - step, b = best_v + step;
          double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
          double f1 = at(x1), f2 = at(x2);
          for (std::size_t k = 0; k < opt.golden_steps; ++k) {
            if (f1 >= f2) {
              b = x2;
              x2 = x1;
              f2 = f1;
              x1 = b - phi * (b - a);
              f1 = at(x1);
            } else {
              a = x1;
              x1 = x2;
              f1 = f2;
              x2 = a + phi * (b - a);
              f2 = at(x2);
            }
          }
          if (f1 > best_s) best_s = f1, best_v = x1;
          if (f2 > best_s) best_s = f2, best_v = x2;
        }
        if (best_s > score) {
          w[d] = best_v;
          score = best_s;
          moved = true;
        }
      }
      if (!moved) break;
    }
    bool nonzero = false;
    for (const double x : w) nonzero |= x != 0.0;
    if (nonzero && score > result.bleu) {
      result.bleu = score;
      result.weights = RerankWeights(names, w);
    }
  }
  return result;
}

}  // namespace knmt
