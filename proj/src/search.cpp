#include "knmt/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "knmt/error.hpp"

namespace knmt {

double Hypothesis::score(bool length_norm) const {
  return length_norm && !tokens.empty() ? logprob / static_cast<double>(tokens.size()) : logprob;
}

std::vector<int> Hypothesis::words() const {
  std::vector<int> out = tokens;
  if (!out.empty() && out.back() == Vocabulary::kEos) out.pop_back();
  return out;
}

template <typename Real>
void check_ensemble(std::span<const Seq2SeqModel<Real>* const> members) {
  if (members.empty()) throw ContractError("ensemble: no members");
  const auto& first = *members.front();
  for (std::size_t m = 1; m < members.size(); ++m) {
    const auto& other = *members[m];
    if (!(other.source_vocab() == first.source_vocab()) ||
        !(other.target_vocab() == first.target_vocab())) {
      throw ConfigError("ensemble member " + std::to_string(m + 1) +
                        " has a different vocabulary");
    }
    if (other.factored() != first.factored() ||
        (first.factored() && !(other.factor_vocab() == first.factor_vocab()))) {
      throw ConfigError("ensemble member " + std::to_string(m + 1) +
                        " has a different factor vocabulary");
    }
  }
}

namespace {

bool emittable(int id) { return id != Vocabulary::kPad && id != Vocabulary::kBos; }

// Per-member decoder states for K live hypotheses and the merged
// log-distributions of one step.
template <typename Real>
class Scorer {
 public:
  Scorer(std::span<const Seq2SeqModel<Real>* const> members, std::span<const int> src,
         bool geometric)
      : members_(members), geometric_(geometric && members.size() > 1) {
    check_ensemble(members);
    for (const auto* m : members) {
      enc_.push_back(m->encode_source(src));
      hidden_.push_back(enc_.back().initial_state);
    }
    next_.resize(members.size());
    vocab_ = members.front()->target_vocab().size();
    factors_ = members.front()->factored() ? members.front()->factor_vocab().size() : 0;
  }

  std::size_t vocab() const { return vocab_; }
  std::size_t factors() const { return factors_; }

  /// Fills `lp` [K×V] and, for factored models, `lpf` [K×F].
  void advance(std::span<const int> prev, std::vector<double>& lp, std::vector<double>& lpf) {
    const std::size_t K = prev.size();
    lp.assign(K * vocab_, 0.0);
    lpf.assign(K * factors_, 0.0);
    for (std::size_t m = 0; m < members_.size(); ++m) {
      auto out = members_[m]->step(enc_[m], hidden_[m], prev);
      accumulate(out.probs, lp);
      if (factors_) accumulate(out.factor_probs, lpf);
      next_[m] = std::move(out.hidden);
    }
    finish(lp, vocab_);
    if (factors_) finish(lpf, factors_);
  }

  /// Keeps the rows of the last step's states named by `parents`.
  void select(std::span<const std::size_t> parents) {
    for (std::size_t m = 0; m < members_.size(); ++m) {
      const auto& src = next_[m];
      const std::size_t D = src.cols();
      Tensor<Real> h({parents.size(), D});
      for (std::size_t r = 0; r < parents.size(); ++r) {
        std::copy_n(src.data.begin() + static_cast<std::ptrdiff_t>(parents[r] * D), D,
                    h.data.begin() + static_cast<std::ptrdiff_t>(r * D));
      }
      hidden_[m] = std::move(h);
    }
  }

 private:
  void accumulate(const Tensor<Real>& probs, std::vector<double>& acc) const {
    for (std::size_t i = 0; i < acc.size(); ++i) {
      const double p = static_cast<double>(probs.data[i]);
      acc[i] += geometric_ ? std::log(p) : p;
    }
  }

  void finish(std::vector<double>& acc, std::size_t width) const {
    const double n = static_cast<double>(members_.size());
    if (!geometric_) {
      for (auto& v : acc) v = std::log(v / n);
      return;
    }
    for (std::size_t r = 0; r < acc.size() / width; ++r) {
      const auto row = std::span(acc).subspan(r * width, width);
      for (auto& v : row) v /= n;
      const double mx = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (const double v : row) z += std::exp(v - mx);
      const double lz = mx + std::log(z);
      for (auto& v : row) v -= lz;
    }
  }

  std::span<const Seq2SeqModel<Real>* const> members_;
  bool geometric_;
  std::vector<EncodedSource<Real>> enc_;
  std::vector<Tensor<Real>> hidden_, next_;
  std::size_t vocab_ = 0, factors_ = 0;
};

// Highest value first; ties keep the lower index.
std::size_t argmax(std::span<const double> v, bool (*allowed)(int)) {
  std::size_t best = v.size();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (allowed && !allowed(static_cast<int>(i))) continue;
    if (best == v.size() || v[i] > v[best]) best = i;
  }
  return best;
}

// The `n` best indices of `v`, best first, ties to the lower index.
std::vector<int> top_ids(std::span<const double> v, std::size_t n, bool (*allowed)(int)) {
  std::vector<int> ids;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!allowed || allowed(static_cast<int>(i))) ids.push_back(static_cast<int>(i));
  const auto better = [&](int a, int b) {
    return v[static_cast<std::size_t>(a)] > v[static_cast<std::size_t>(b)] ||
           (v[static_cast<std::size_t>(a)] == v[static_cast<std::size_t>(b)] && a < b);
  };
  n = std::min(n, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(), better);
  ids.resize(n);
  return ids;
}

struct Candidate {
  double score;
  std::size_t parent;
  int token;
  int factor;  // -1: none
  double step;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.parent != b.parent) return a.parent < b.parent;
  if (a.token != b.token) return a.token < b.token;
  return a.factor < b.factor;
}

void sort_finished(NBestList& finished, bool length_norm) {
  std::stable_sort(finished.begin(), finished.end(), [&](const auto& a, const auto& b) {
    return a.score(length_norm) > b.score(length_norm);
  });
}

template <typename Real>
NBestList run_beam(std::span<const Seq2SeqModel<Real>* const> members, std::span<const int> src,
                   const SearchOptions& opt, bool factored) {
  if (opt.beam < 1) throw ContractError("beam must be >= 1");
  if (opt.max_len < 1) throw ContractError("max_len must be >= 1");
  if (factored && opt.factor_k < 1) throw ContractError("factor_k must be >= 1");
  Scorer<Real> scorer(members, src, opt.geometric_mean);
  if (factored && scorer.factors() == 0) {
    throw ContractError("factored_beam_decode: model is not factored");
  }
  NBestList live(1), finished;
  std::vector<int> prev = {Vocabulary::kBos};
  std::vector<double> lp, lpf;
  std::vector<Candidate> cands;
  for (std::size_t t = 0; t < opt.max_len && !live.empty(); ++t) {
    scorer.advance(prev, lp, lpf);
    const std::size_t V = scorer.vocab(), F = scorer.factors();
    cands.clear();
    for (std::size_t k = 0; k < live.size(); ++k) {
      const auto row = std::span<const double>(lp).subspan(k * V, V);
      if (!factored) {
        for (std::size_t v = 0; v < V; ++v) {
          if (!emittable(static_cast<int>(v))) continue;
          cands.push_back({live[k].logprob + row[v], k, static_cast<int>(v), -1, row[v]});
        }
        continue;
      }
      const auto frow = std::span<const double>(lpf).subspan(k * F, F);
      const auto fids = top_ids(frow, opt.factor_k, nullptr);
      for (const int l : top_ids(row, opt.beam, emittable)) {
        const double ll = row[static_cast<std::size_t>(l)];
        if (l == Vocabulary::kEos) {
          cands.push_back({live[k].logprob + ll, k, l, -1, ll});
          continue;
        }
        for (const int f : fids) {
          const double s = ll + frow[static_cast<std::size_t>(f)];
          cands.push_back({live[k].logprob + s, k, l, f, s});
        }
      }
    }
    const std::size_t keep = std::min(opt.beam - finished.size(), cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep),
                      cands.end(), better);
    NBestList next;
    std::vector<std::size_t> parents;
    prev.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = cands[i];
      Hypothesis h = live[c.parent];
      h.tokens.push_back(c.token);
      if (c.factor >= 0) h.factors.push_back(c.factor);
      h.step_logprobs.push_back(c.step);
      h.logprob = c.score;
      if (c.token == Vocabulary::kEos) {
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
        parents.push_back(c.parent);
        prev.push_back(c.token);
      }
    }
    live = std::move(next);
    if (finished.size() >= opt.beam) break;
    if (!live.empty()) scorer.select(parents);
  }
  for (auto& h : live) {
    if (finished.size() >= opt.beam) break;
    h.tokens.push_back(Vocabulary::kEos);
    h.forced = true;
    finished.push_back(std::move(h));
  }
  sort_finished(finished, opt.length_norm);
  return finished;
}

}  // namespace

template <typename Real>
Hypothesis greedy_decode(std::span<const Seq2SeqModel<Real>* const> members,
                         std::span<const int> src, std::size_t max_len, bool geometric_mean) {
  if (max_len < 1) throw ContractError("max_len must be >= 1");
  Scorer<Real> scorer(members, src, geometric_mean);
  Hypothesis h;
  std::vector<int> prev = {Vocabulary::kBos};
  std::vector<double> lp, lpf;
  const std::size_t zero[] = {0};
  for (std::size_t t = 0; t < max_len; ++t) {
    scorer.advance(prev, lp, lpf);
    const int tok = static_cast<int>(argmax(lp, emittable));
    double s = lp[static_cast<std::size_t>(tok)];
    h.tokens.push_back(tok);
    if (tok == Vocabulary::kEos) {
      h.step_logprobs.push_back(s);
      h.logprob += s;
      return h;
    }
    if (scorer.factors()) {
      const auto f = argmax(lpf, nullptr);
      h.factors.push_back(static_cast<int>(f));
      s += lpf[f];
    }
    h.step_logprobs.push_back(s);
    h.logprob += s;
    prev[0] = tok;
    scorer.select(zero);
  }
  h.tokens.push_back(Vocabulary::kEos);
  h.forced = true;
  return h;
}

template <typename Real>
NextDistribution next_log_probs(std::span<const Seq2SeqModel<Real>* const> members,
                                std::span<const int> src, std::span<const int> prefix,
                                bool geometric_mean) {
  Scorer<Real> scorer(members, src, geometric_mean);
  NextDistribution d;
  std::vector<int> prev = {Vocabulary::kBos};
  const std::size_t zero[] = {0};
  for (std::size_t t = 0;; ++t) {
    scorer.advance(prev, d.lemma, d.factor);
    if (t == prefix.size()) return d;
    prev[0] = prefix[t];
    scorer.select(zero);
  }
}

template <typename Real>
NBestList beam_decode(std::span<const Seq2SeqModel<Real>* const> members,
                      std::span<const int> src, const SearchOptions& options) {
  return run_beam<Real>(members, src, options, false);
}

template <typename Real>
NBestList factored_beam_decode(std::span<const Seq2SeqModel<Real>* const> members,
                               std::span<const int> src, const SearchOptions& options) {
  return run_beam<Real>(members, src, options, true);
}

#define KNMT_INSTANTIATE(Real)                                                                  \
  template void check_ensemble<Real>(std::span<const Seq2SeqModel<Real>* const>);              \
  template Hypothesis greedy_decode<Real>(std::span<const Seq2SeqModel<Real>* const>,          \
                                          std::span<const int>, std::size_t, bool);            \
  template NextDistribution next_log_probs<Real>(std::span<const Seq2SeqModel<Real>* const>,   \
                                                 std::span<const int>, std::span<const int>,   \
                                                 bool);                                        \
  template NBestList beam_decode<Real>(std::span<const Seq2SeqModel<Real>* const>,             \
                                       std::span<const int>, const SearchOptions&);            \
  template NBestList factored_beam_decode<Real>(std::span<const Seq2SeqModel<Real>* const>,    \
                                                std::span<const int>, const SearchOptions&);
KNMT_INSTANTIATE(float)
KNMT_INSTANTIATE(double)
#undef KNMT_INSTANTIATE

}  // namespace knmt
