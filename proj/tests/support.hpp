#pragma once

// Small shared fixtures for the test binaries.

#include <optional>
#include <string>
#include <vector>

#include "knmt/model.hpp"
#include "knmt/rng.hpp"

namespace knmt::testing {

/// Reserved entries plus `words` tokens "w0", "w1", ...
inline Vocabulary word_vocab(std::size_t words, const std::string& prefix = "w") {
  Vocabulary v;
  for (std::size_t i = 0; i < words; ++i) v.add(prefix + std::to_string(i));
  return v;
}

inline Vocabulary tag_vocab(std::size_t tags) {
  Vocabulary v = Vocabulary::plain();
  for (std::size_t i = 0; i < tags; ++i) v.add("F" + std::to_string(i));
  return v;
}

inline ModelConfig tiny_config(std::size_t emb = 4, std::size_t hidden = 5) {
  ModelConfig c;
  c.emb_dim = emb;
  c.enc_hidden = hidden;
  c.dec_hidden = hidden;
  c.dropout_p = 0.0;
  return c;
}

/// Ids drawn from the non-reserved range of a vocabulary of `vocab` entries.
inline std::vector<int> random_ids(Rng& rng, std::size_t vocab, std::size_t len) {
  std::vector<int> ids(len);
  for (auto& id : ids) {
    id = Vocabulary::kNumReserved + static_cast<int>(rng.below(vocab - Vocabulary::kNumReserved));
  }
  return ids;
}

/// Unit-scale weights with embeddings in [-2, 2]. The encoder's layer
/// normalization is scale invariant in its input, so its curvature (and the
/// truncation error of a 1e-3 central difference) shrinks with the
/// embedding norm; Xavier tables at width 8 sit close to the step size.
inline void well_conditioned_init(ParameterSet<double>& ps, std::uint64_t seed) {
  Rng rng = Rng::named(seed, "gradcheck");
  for (const auto& name : ps.names()) {
    auto& t = ps.get(name);
    if (t.shape.size() != 2) continue;
    const double limit = name.rfind("emb.", 0) == 0 ? 2.0 : 1.0;
    for (auto& x : t.data) x = rng.uniform(-limit, limit);
  }
}

/// Finite-difference check of one encoder / decoder / output graph: a
/// two-word source and a one-word target, widths 8.
inline GradCheckReport model_grad_check(const ModelConfig& base, std::uint64_t seed) {
  ModelConfig config = base;
  config.emb_dim = 8;
  config.enc_hidden = config.dec_hidden = 8;
  config.dropout_p = 0.0;
  const std::size_t v = 7;
  std::optional<Vocabulary> tags;
  if (config.factored) tags = tag_vocab(3);
  auto model = Seq2SeqModel<double>::build(config, word_vocab(v - 4), word_vocab(v - 4), tags, seed);
  well_conditioned_init(model.params(), seed);
  Rng rng(seed + 1);
  const auto src = random_ids(rng, v, 2);
  const auto tgt = random_ids(rng, v, 1);
  const TrainBatch batch = config.factored
                               ? model.make_batch({src}, {tgt}, {{static_cast<int>(rng.below(3))}})
                               : model.make_batch({src}, {tgt});
  auto tensors = model.params().tensors();
  return grad_check([&](Graph<double>& g) { return model.loss(g, batch, false, nullptr).total; },
                    tensors, model.params().names());
}

}  // namespace knmt::testing
