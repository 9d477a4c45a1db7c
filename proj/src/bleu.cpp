#include "knmt/bleu.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "knmt/error.hpp"

namespace knmt {

namespace {

using NgramCounts = std::map<std::span<const std::string>, std::size_t,
                             decltype([](std::span<const std::string> a,
                                         std::span<const std::string> b) {
                               return std::lexicographical_compare(a.begin(), a.end(), b.begin(),
                                                                   b.end());
                             })>;

NgramCounts count_ngrams(const Sentence& s, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[std::span(s).subspan(i, n)];
  return counts;
}

}  // namespace

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (std::size_t n = 0; n < 4; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  hyp_len += o.hyp_len;
  ref_len += o.ref_len;
  return *this;
}

BleuStats& BleuStats::operator-=(const BleuStats& o) {
  for (std::size_t n = 0; n < 4; ++n) {
    matches[n] -= o.matches[n];
    totals[n] -= o.totals[n];
  }
  hyp_len -= o.hyp_len;
  ref_len -= o.ref_len;
  return *this;
}

BleuStats sentence_stats(const Sentence& hyp, const Sentence& ref) {
  BleuStats st;
  st.hyp_len = hyp.size();
  st.ref_len = ref.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto h = count_ngrams(hyp, n);
    const auto r = count_ngrams(ref, n);
    for (const auto& [gram, c] : h) {
      auto it = r.find(gram);
      if (it != r.end()) st.matches[n - 1] += std::min(c, it->second);
    }
    if (hyp.size() >= n) st.totals[n - 1] = hyp.size() - n + 1;
  }
  return st;
}

BleuReport bleu_from_stats(const BleuStats& st, bool smooth) {
  BleuReport r;
  r.matches = st.matches;
  r.totals = st.totals;
  r.hyp_len = st.hyp_len;
  r.ref_len = st.ref_len;
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    double m = static_cast<double>(r.matches[n]), t = static_cast<double>(r.totals[n]);
    if (smooth && n > 0) {
      m += 1;
      t += 1;
    }
    r.precisions[n] = t > 0 ? 100.0 * m / t : 0.0;
    if (m == 0 || t == 0) {
      zero = true;
    } else {
      log_sum += std::log(m / t);
    }
  }
  const double h = static_cast<double>(r.hyp_len), ref = static_cast<double>(r.ref_len);
  r.ratio = ref > 0 ? h / ref : 0.0;
  if (r.hyp_len == 0) {
    r.brevity_penalty = 0.0;
  } else {
    r.brevity_penalty = h < ref ? std::exp(1.0 - ref / h) : 1.0;
  }
  r.bleu = zero || r.hyp_len == 0 ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

BleuReport bleu(std::span<const Sentence> hyps, std::span<const Sentence> refs, bool smooth) {
  if (hyps.empty()) throw ContractError("bleu: empty hypothesis set");
  if (hyps.size() != refs.size()) {
    throw ContractError("bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                        std::to_string(refs.size()) + " references");
  }
  BleuStats total;
  for (std::size_t s = 0; s < hyps.size(); ++s) total += sentence_stats(hyps[s], refs[s]);
  return bleu_from_stats(total, smooth);
}

std::string BleuReport::format() const {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "BLEU = %.2f, %.1f/%.1f/%.1f/%.1f (BP=%.3f, ratio=%.3f, hyp_len=%zu, ref_len=%zu)",
                bleu, precisions[0], precisions[1], precisions[2], precisions[3], brevity_penalty,
                ratio, hyp_len, ref_len);
  return buf;
}

}  // namespace knmt
