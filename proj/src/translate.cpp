#include "knmt/translate.hpp"

#include "knmt/bpe.hpp"
#include "knmt/config.hpp"
#include "knmt/error.hpp"
#include "knmt/parallel.hpp"
#include "knmt/reinflect.hpp"
#include "knmt/trainer.hpp"

namespace knmt {

bool DecodeConfig::set(const std::string& key, const std::string& value) {
  if (key == "beam") beam = parse_count(key, value, false);
  else if (key == "max_len") max_len = parse_count(key, value, true);
  else if (key == "length_norm") length_norm = parse_bool(key, value);
  else if (key == "factor_k") factor_k = parse_count(key, value, false);
  else if (key == "greedy") greedy = parse_bool(key, value);
  else if (key == "geometric_mean") geometric_mean = parse_bool(key, value);
  else if (key == "jobs") jobs = parse_count(key, value, false);
  else return false;
  return true;
}

std::vector<std::pair<std::string, std::string>> DecodeConfig::items() const {
  const auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {{"beam", std::to_string(beam)},
          {"max_len", std::to_string(max_len)},
          {"length_norm", b(length_norm)},
          {"factor_k", std::to_string(factor_k)},
          {"greedy", b(greedy)},
          {"geometric_mean", b(geometric_mean)},
          {"jobs", std::to_string(jobs)}};
}

void DecodeConfig::validate() const {
  if (!beam || !factor_k || !jobs) throw ConfigError("beam, factor_k and jobs must be positive");
}

SearchOptions DecodeConfig::options(std::size_t source_len) const {
  SearchOptions o;
  o.beam = beam;
  o.max_len = max_len ? max_len : default_max_len(source_len);
  o.length_norm = length_norm;
  o.factor_k = factor_k;
  o.geometric_mean = geometric_mean;
  return o;
}

template <typename Real>
std::vector<NBestList> decode_corpus(std::span<const Seq2SeqModel<Real>* const> members,
                                     const std::vector<std::vector<int>>& sources,
                                     const DecodeConfig& config) {
  config.validate();
  if (members.empty()) throw ContractError("decode_corpus: no models");
  check_ensemble(members);
  const bool factored = members.front()->factored();
  return parallel_map(sources.size(), config.jobs, [&](std::size_t i) {
    const auto& src = sources[i];
    const SearchOptions o = config.options(src.size());
    if (config.greedy) return NBestList{greedy_decode<Real>(members, src, o.max_len, o.geometric_mean)};
    return factored ? factored_beam_decode<Real>(members, src, o) : beam_decode<Real>(members, src, o);
  });
}

template <typename Real>
std::pair<Sentence, Sentence> factored_streams(const Seq2SeqModel<Real>& model,
                                               const Hypothesis& h) {
  if (!model.factored()) throw ContractError("factored_streams: word model");
  const auto words = h.words();
  if (words.size() != h.factors.size()) throw ContractError("factored_streams: stream lengths differ");
  return {model.target_vocab().decode(words), model.factor_vocab().decode(h.factors)};
}

template <typename Real>
Sentence hypothesis_text(const Seq2SeqModel<Real>& model, const Hypothesis& h, bool merge) {
  if (!model.factored()) {
    const Sentence pieces = model.target_vocab().decode(h.words());
    return merge ? detokenize_bpe(pieces).words : pieces;
  }
  auto [lemmas, factors] = factored_streams(model, h);
  if (merge) std::tie(lemmas, factors) = join_factored_pieces(lemmas, factors);
  FactoredSentence fs;
  for (std::size_t i = 0; i < lemmas.size(); ++i) fs.push_back({lemmas[i], factors[i]});
  return split_words(format_factored(fs));
}

#define KNMT_INSTANTIATE(Real)                                                                   \
  template std::vector<NBestList> decode_corpus<Real>(                                           \
      std::span<const Seq2SeqModel<Real>* const>, const std::vector<std::vector<int>>&,          \
      const DecodeConfig&);                                                                      \
  template Sentence hypothesis_text<Real>(const Seq2SeqModel<Real>&, const Hypothesis&, bool);  \
  template std::pair<Sentence, Sentence> factored_streams<Real>(const Seq2SeqModel<Real>&,       \
                                                                const Hypothesis&);
KNMT_INSTANTIATE(float)
KNMT_INSTANTIATE(double)
#undef KNMT_INSTANTIATE

}  // namespace knmt
