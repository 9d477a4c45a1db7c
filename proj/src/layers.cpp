#include "knmt/layers.hpp"

namespace knmt {

std::string to_string(TyingMode m) {
  switch (m) {
    case TyingMode::none: return "none";
    case TyingMode::tied2: return "tied2";
    case TyingMode::tied3: return "tied3";
  }
  return "?";
}

std::string to_string(InitMode m) { return m == InitMode::zero ? "zero" : "mean_state"; }
std::string to_string(OutputMode m) { return m == OutputMode::simple ? "simple" : "conditional"; }

TyingMode parse_tying_mode(const std::string& s) {
  if (s == "none") return TyingMode::none;
  if (s == "tied2") return TyingMode::tied2;
  if (s == "tied3") return TyingMode::tied3;
  throw ConfigError("tying_mode: expected none|tied2|tied3, got '" + s + "'");
}

InitMode parse_init_mode(const std::string& s) {
  if (s == "mean_state") return InitMode::mean_state;
  if (s == "zero") return InitMode::zero;
  throw ConfigError("init_mode: expected mean_state|zero, got '" + s + "'");
}

OutputMode parse_output_mode(const std::string& s) {
  if (s == "conditional") return OutputMode::conditional;
  if (s == "simple") return OutputMode::simple;
  throw ConfigError("output_mode: expected conditional|simple, got '" + s + "'");
}

template <typename Real>
Expr<Real> dropout(Expr<Real> x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ContractError("dropout: probability must be in [0, 1), got " + std::to_string(p));
  }
  if (p == 0.0 || !training) return x;
  const Real keep_scale = static_cast<Real>(1.0 / (1.0 - p));
  std::vector<Real> mask(x.value().size());
  for (auto& m : mask) m = rng.uniform() < p ? Real(0) : keep_scale;
  return x * x.graph->constant(x.shape(), std::move(mask));
}

template <typename Real>
EmbeddingTable<Real>::EmbeddingTable(ParameterSet<Real>& params, std::size_t src_vocab,
                                     std::size_t tgt_vocab, std::size_t dim, TyingMode mode)
    : mode_(mode), dim_(dim) {
  switch (mode) {
    case TyingMode::none:
      source_ = &params.add("emb.source", {src_vocab, dim});
      feedback_ = &params.add("emb.target", {tgt_vocab, dim});
      output_ = &params.add("out.W_o", {tgt_vocab, dim});
      break;
    case TyingMode::tied2:
      source_ = &params.add("emb.source", {src_vocab, dim});
      feedback_ = &params.add("emb.target", {tgt_vocab, dim});
      params.alias("out.W_o", "emb.target");
      output_ = feedback_;
      break;
    case TyingMode::tied3:
      if (src_vocab != tgt_vocab) {
        throw ConfigError("tied3 requires one combined vocabulary (source " +
                          std::to_string(src_vocab) + " vs target " + std::to_string(tgt_vocab) +
                          ")");
      }
      feedback_ = &params.add("emb.target", {tgt_vocab, dim});
      params.alias("emb.source", "emb.target");
      params.alias("out.W_o", "emb.target");
      source_ = output_ = feedback_;
      break;
  }
}

template <typename Real>
Expr<Real> EmbeddingTable<Real>::embed(Graph<Real>& g, std::span<const int> ids,
                                       EmbedRole role) const {
  return g.lookup(g.parameter(table(role)), ids);
}

template <typename Real>
LayerNorm<Real>::LayerNorm(ParameterSet<Real>& params, const std::string& prefix,
                           std::size_t dim)
    : gain_(&params.add(prefix + ".gain", {dim})),
      bias_(&params.add(prefix + ".bias", {dim})),
      dim_(dim) {
  std::fill(gain_->data.begin(), gain_->data.end(), Real(1));
}

template <typename Real>
Expr<Real> LayerNorm<Real>::operator()(Expr<Real> x) const {
  Graph<Real>& g = *x.graph;
  return g.layer_norm(x, g.parameter(*gain_), g.parameter(*bias_), static_cast<Real>(kEpsilon));
}

template <typename Real>
GruCell<Real>::GruCell(ParameterSet<Real>& params, const std::string& prefix,
                       std::size_t input_dim, std::size_t hidden_dim, bool layer_norm)
    : input_dim_(input_dim), hidden_dim_(hidden_dim) {
  W_z_ = &params.add(prefix + ".W_z", {input_dim, hidden_dim});
  W_r_ = &params.add(prefix + ".W_r", {input_dim, hidden_dim});
  W_h_ = &params.add(prefix + ".W_h", {input_dim, hidden_dim});
  U_z_ = &params.add(prefix + ".U_z", {hidden_dim, hidden_dim});
  U_r_ = &params.add(prefix + ".U_r", {hidden_dim, hidden_dim});
  U_h_ = &params.add(prefix + ".U_h", {hidden_dim, hidden_dim});
  b_z_ = &params.add(prefix + ".b_z", {hidden_dim});
  b_r_ = &params.add(prefix + ".b_r", {hidden_dim});
  b_h_ = &params.add(prefix + ".b_h", {hidden_dim});
  if (layer_norm) {
    ln_z_.emplace(params, prefix + ".ln_z", hidden_dim);
    ln_r_.emplace(params, prefix + ".ln_r", hidden_dim);
    ln_h_.emplace(params, prefix + ".ln_h", hidden_dim);
  }
}

template <typename Real>
Expr<Real> GruCell<Real>::gate(Graph<Real>& g, Expr<Real> x, Expr<Real> h, Tensor<Real>* W,
                               Tensor<Real>* U, Tensor<Real>* b,
                               const std::optional<LayerNorm<Real>>& ln) const {
  auto pre = g.add_bias(g.matmul(x, g.parameter(*W)) + g.matmul(h, g.parameter(*U)),
                        g.parameter(*b));
  return ln ? (*ln)(pre) : pre;
}

template <typename Real>
Expr<Real> GruCell<Real>::step(Graph<Real>& g, Expr<Real> x, Expr<Real> h_prev) const {
  if (x.cols() != input_dim_ || h_prev.cols() != hidden_dim_ || x.rows() != h_prev.rows()) {
    throw DimensionError("gru_step: input " + shape_str(x.shape()) + " / state " +
                         shape_str(h_prev.shape()) + " do not fit cell " +
                         std::to_string(input_dim_) + "->" + std::to_string(hidden_dim_));
  }
  auto z = sigmoid(gate(g, x, h_prev, W_z_, U_z_, b_z_, ln_z_));
  auto r = sigmoid(gate(g, x, h_prev, W_r_, U_r_, b_r_, ln_r_));
  auto candidate = tanh(gate(g, x, r * h_prev, W_h_, U_h_, b_h_, ln_h_));
  // (1−z)⊙h + z⊙h̃ written as h + z⊙(h̃ − h).
  return h_prev + z * (candidate - h_prev);
}

template <typename Real>
std::vector<Expr<Real>> run_gru(Graph<Real>& g, const GruCell<Real>& cell,
                                std::span<const Expr<Real>> inputs, Masks<Real> masks,
                                bool reverse) {
  const std::size_t T = inputs.size();
  if (T == 0) throw ContractError("run_gru: empty sequence");
  if (!masks.empty() && masks.size() != T) {
    throw DimensionError("run_gru: " + std::to_string(masks.size()) + " masks for " +
                         std::to_string(T) + " positions");
  }
  const std::size_t B = inputs[0].rows();
  auto h = g.constant(Tensor<Real>({B, cell.hidden_dim()}));
  std::vector<Expr<Real>> states(T);
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t t = reverse ? T - 1 - k : k;
    auto next = cell.step(g, inputs[t], h);
    if (!masks.empty()) next = h + g.scale_rows(masks[t], next - h);
    states[t] = h = next;
  }
  return states;
}

template <typename Real>
std::vector<Expr<Real>> encode(Graph<Real>& g, std::span<const Expr<Real>> embeddings,
                               const GruCell<Real>& fwd, const GruCell<Real>& bwd,
                               Masks<Real> masks) {
  if (embeddings.empty()) throw ContractError("encode: empty source sequence");
  auto f = run_gru(g, fwd, embeddings, masks, false);
  auto b = run_gru(g, bwd, embeddings, masks, true);
  std::vector<Expr<Real>> annotations(embeddings.size());
  for (std::size_t t = 0; t < embeddings.size(); ++t) {
    const Expr<Real> parts[] = {f[t], b[t]};
    annotations[t] = g.concat(parts, 1);
  }
  return annotations;
}

template <typename Real>
AttentionHead<Real>::AttentionHead(ParameterSet<Real>& params, const std::string& prefix,
                                   std::size_t annotation_dim, std::size_t state_dim,
                                   std::size_t alignment_dim)
    : alignment_dim_(alignment_dim) {
  W_s_ = &params.add(prefix + ".W_s", {state_dim, alignment_dim});
  W_a_ = &params.add(prefix + ".W_a", {annotation_dim, alignment_dim});
  b_ = &params.add(prefix + ".b", {alignment_dim});
  v_ = &params.add(prefix + ".v", {alignment_dim, 1});
}

template <typename Real>
std::vector<Expr<Real>> AttentionHead<Real>::project(
    Graph<Real>& g, std::span<const Expr<Real>> annotations) const {
  auto W = g.parameter(*W_a_);
  auto b = g.parameter(*b_);
  std::vector<Expr<Real>> out;
  out.reserve(annotations.size());
  for (const auto& a : annotations) out.push_back(g.add_bias(g.matmul(a, W), b));
  return out;
}

template <typename Real>
Attention<Real> AttentionHead<Real>::attend(Graph<Real>& g,
                                            std::span<const Expr<Real>> annotations,
                                            std::span<const Expr<Real>> projected,
                                            Expr<Real> state,
                                            std::optional<Expr<Real>> penalty) const {
  if (annotations.empty()) throw ContractError("attend: no source annotations");
  if (projected.size() != annotations.size()) {
    throw DimensionError("attend: projections do not match annotations");
  }
  auto s = g.matmul(state, g.parameter(*W_s_));
  auto v = g.parameter(*v_);
  std::vector<Expr<Real>> scores;
  scores.reserve(annotations.size());
  for (const auto& p : projected) scores.push_back(g.matmul(tanh(p + s), v));
  auto e = g.concat(scores, 1);
  if (penalty) e = e + *penalty;
  auto alpha = softmax(e);
  Expr<Real> context;
  for (std::size_t j = 0; j < annotations.size(); ++j) {
    auto term = g.scale_rows(annotations.size() == 1 ? alpha : g.slice(alpha, 1, j, j + 1),
                             annotations[j]);
    context = j == 0 ? term : context + term;
  }
  return {context, alpha};
}

template <typename Real>
CgruDecoder<Real>::CgruDecoder(ParameterSet<Real>& params, const std::string& prefix,
                               std::size_t emb_dim, std::size_t annotation_dim,
                               std::size_t hidden_dim, std::size_t alignment_dim,
                               InitMode init_mode)
    : init_mode_(init_mode), hidden_dim_(hidden_dim) {
  if (init_mode == InitMode::mean_state) {
    W_init_ = &params.add(prefix + ".init.W", {annotation_dim, hidden_dim});
    b_init_ = &params.add(prefix + ".init.b", {hidden_dim});
  }
  gru1_ = GruCell<Real>(params, prefix + ".gru1", emb_dim, hidden_dim, false);
  attention_ = AttentionHead<Real>(params, prefix + ".att", annotation_dim, hidden_dim,
                                   alignment_dim);
  gru2_ = GruCell<Real>(params, prefix + ".gru2", annotation_dim, hidden_dim, false);
}

template <typename Real>
Expr<Real> CgruDecoder<Real>::initial_state(Graph<Real>& g,
                                            std::span<const Expr<Real>> annotations,
                                            Masks<Real> masks) const {
  if (annotations.empty()) throw ContractError("initial_state: no source annotations");
  const std::size_t B = annotations[0].rows();
  if (init_mode_ == InitMode::zero) return g.constant(Tensor<Real>({B, hidden_dim_}));
  Expr<Real> total;
  std::vector<Real> counts(B, Real(0));
  for (std::size_t j = 0; j < annotations.size(); ++j) {
    auto a = annotations[j];
    if (!masks.empty()) {
      a = g.scale_rows(masks[j], a);
      const auto m = masks[j].value();
      for (std::size_t b = 0; b < B; ++b) counts[b] += m[b];
    } else {
      for (auto& c : counts) c += Real(1);
    }
    total = j == 0 ? a : total + a;
  }
  for (auto& c : counts) c = Real(1) / c;
  auto mean = g.scale_rows(g.constant({B, 1}, std::move(counts)), total);
  return tanh(g.add_bias(g.matmul(mean, g.parameter(*W_init_)), g.parameter(*b_init_)));
}

template <typename Real>
CgruOutput<Real> CgruDecoder<Real>::step(Graph<Real>& g, Expr<Real> y_prev_emb,
                                         Expr<Real> h_prev,
                                         std::span<const Expr<Real>> annotations,
                                         std::span<const Expr<Real>> projected,
                                         std::optional<Expr<Real>> penalty) const {
  auto s = gru1_.step(g, y_prev_emb, h_prev);
  auto att = attention_.attend(g, annotations, projected, s, penalty);
  auto h = gru2_.step(g, att.context, s);
  return {h, att.context, att.weights};
}

template <typename Real>
OutputHead<Real>::OutputHead(ParameterSet<Real>& params, const std::string& prefix,
                             std::size_t state_dim, std::size_t annotation_dim,
                             std::size_t emb_dim, Tensor<Real>& projection,
                             const std::string& bias_name, OutputMode mode)
    : W_o_(&projection), mode_(mode) {
  if (projection.shape.size() != 2 || projection.shape[1] != emb_dim) {
    throw DimensionError("output head: projection " + shape_str(projection.shape) +
                         " must be [vocab x " + std::to_string(emb_dim) + "]");
  }
  W_h_ = &params.add(prefix + ".W_h", {state_dim, emb_dim});
  if (mode == OutputMode::conditional) W_c_ = &params.add(prefix + ".W_c", {annotation_dim, emb_dim});
  b_ = &params.add(prefix + ".b", {emb_dim});
  bias_o_ = &params.add(bias_name, {projection.shape[0]});
}

template <typename Real>
Expr<Real> OutputHead<Real>::hidden(Graph<Real>& g, Expr<Real> h, Expr<Real> y_prev_emb,
                                    Expr<Real> c) const {
  auto pre = g.matmul(h, g.parameter(*W_h_));
  if (mode_ == OutputMode::conditional) pre = pre + y_prev_emb + g.matmul(c, g.parameter(*W_c_));
  return tanh(g.add_bias(pre, g.parameter(*b_)));
}

template <typename Real>
Expr<Real> OutputHead<Real>::logits(Graph<Real>& g, Expr<Real> o) const {
  return g.add_bias(g.matmul_nt(o, g.parameter(*W_o_)), g.parameter(*bias_o_));
}

#define KNMT_INSTANTIATE(Real)                                                            \
  template Expr<Real> dropout<Real>(Expr<Real>, double, bool, Rng&);                      \
  template class EmbeddingTable<Real>;                                                    \
  template class LayerNorm<Real>;                                                         \
  template class GruCell<Real>;                                                           \
  template std::vector<Expr<Real>> run_gru<Real>(Graph<Real>&, const GruCell<Real>&,      \
                                                 std::span<const Expr<Real>>, Masks<Real>, \
                                                 bool);                                   \
  template std::vector<Expr<Real>> encode<Real>(Graph<Real>&, std::span<const Expr<Real>>, \
                                                const GruCell<Real>&, const GruCell<Real>&, \
                                                Masks<Real>);                             \
  template class AttentionHead<Real>;                                                     \
  template class CgruDecoder<Real>;                                                       \
  template class OutputHead<Real>;

KNMT_INSTANTIATE(float)
KNMT_INSTANTIATE(double)

}  // namespace knmt
