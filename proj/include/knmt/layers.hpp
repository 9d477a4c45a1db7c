#pragma once

// Recurrent building blocks of the attentive encoder-decoder.
//
// Weight matrices are stored [in × out] and applied as x·W on row batches
// [B × in]. Output projections (and the embedding tables they may alias) are
// stored [vocab × emb] and applied as o·Wᵀ via matmul_nt.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "knmt/autodiff.hpp"
#include "knmt/params.hpp"
#include "knmt/rng.hpp"

namespace knmt {

enum class TyingMode { none, tied2, tied3 };
enum class InitMode { mean_state, zero };
enum class OutputMode { conditional, simple };
enum class EmbedRole { source, feedback };

std::string to_string(TyingMode m);
std::string to_string(InitMode m);
std::string to_string(OutputMode m);
TyingMode parse_tying_mode(const std::string& s);
InitMode parse_init_mode(const std::string& s);
OutputMode parse_output_mode(const std::string& s);

/// Inverted dropout. Identity when p == 0 or outside training.
template <typename Real>
Expr<Real> dropout(Expr<Real> x, double p, bool training, Rng& rng);

/// Source and feedback embedding tables under a tying mode.
///
/// none:  separate source, feedback and output tables.
/// tied2: output projection is the feedback table.
/// tied3: one table serves source, feedback and output.
template <typename Real>
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  /// Registers "emb.source", "emb.target" and (untied) "out.W_o".
  EmbeddingTable(ParameterSet<Real>& params, std::size_t src_vocab, std::size_t tgt_vocab,
                 std::size_t dim, TyingMode mode);

  Expr<Real> embed(Graph<Real>& g, std::span<const int> ids, EmbedRole role) const;
  /// [vocab × dim] table applied transposed at the output.
  Tensor<Real>& output_table() const { return *output_; }
  Tensor<Real>& table(EmbedRole role) const {
    return role == EmbedRole::source ? *source_ : *feedback_;
  }
  TyingMode mode() const { return mode_; }
  std::size_t dim() const { return dim_; }

 private:
  Tensor<Real>* source_ = nullptr;
  Tensor<Real>* feedback_ = nullptr;
  Tensor<Real>* output_ = nullptr;
  TyingMode mode_ = TyingMode::none;
  std::size_t dim_ = 0;
};

template <typename Real>
class LayerNorm {
 public:
  static constexpr double kEpsilon = 1e-5;

  LayerNorm() = default;
  LayerNorm(ParameterSet<Real>& params, const std::string& prefix, std::size_t dim);

  Expr<Real> operator()(Expr<Real> x) const;
  std::size_t dim() const { return dim_; }

 private:
  Tensor<Real>* gain_ = nullptr;
  Tensor<Real>* bias_ = nullptr;
  std::size_t dim_ = 0;
};

/// z = σ(xW_z + hU_z + b_z), r = σ(xW_r + hU_r + b_r),
/// h̃ = tanh(xW_h + (r⊙h)U_h + b_h), h' = (1−z)⊙h + z⊙h̃.
/// With layer normalization each gate pre-activation passes through its own
/// LayerNorm before the nonlinearity.
template <typename Real>
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParameterSet<Real>& params, const std::string& prefix, std::size_t input_dim,
          std::size_t hidden_dim, bool layer_norm);

  Expr<Real> step(Graph<Real>& g, Expr<Real> x, Expr<Real> h_prev) const;

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  bool layer_norm() const { return ln_z_.has_value(); }

 private:
  Expr<Real> gate(Graph<Real>& g, Expr<Real> x, Expr<Real> h, Tensor<Real>* W, Tensor<Real>* U,
                  Tensor<Real>* b, const std::optional<LayerNorm<Real>>& ln) const;

  std::size_t input_dim_ = 0, hidden_dim_ = 0;
  Tensor<Real>*W_z_ = nullptr, *W_r_ = nullptr, *W_h_ = nullptr;
  Tensor<Real>*U_z_ = nullptr, *U_r_ = nullptr, *U_h_ = nullptr;
  Tensor<Real>*b_z_ = nullptr, *b_r_ = nullptr, *b_h_ = nullptr;
  std::optional<LayerNorm<Real>> ln_z_, ln_r_, ln_h_;
};

/// Per-position [B×1] masks (1 = real token). An empty span means unpadded.
template <typename Real>
using Masks = std::span<const Expr<Real>>;

/// Runs `cell` over `inputs` left to right (or right to left). Padded
/// positions carry the previous state through unchanged.
template <typename Real>
std::vector<Expr<Real>> run_gru(Graph<Real>& g, const GruCell<Real>& cell,
                                std::span<const Expr<Real>> inputs, Masks<Real> masks,
                                bool reverse);

/// Bidirectional encoder: annotation_t = [fwd_t ; bwd_t], shape [B × 2H].
template <typename Real>
std::vector<Expr<Real>> encode(Graph<Real>& g, std::span<const Expr<Real>> embeddings,
                               const GruCell<Real>& fwd, const GruCell<Real>& bwd,
                               Masks<Real> masks = {});

template <typename Real>
struct Attention {
  Expr<Real> context;  // [B × annotation_dim]
  Expr<Real> weights;  // [B × T]
};

/// Additive attention: e_j = vᵀ tanh(s·W_s + a_j·W_a + b), α = softmax(e).
template <typename Real>
class AttentionHead {
 public:
  AttentionHead() = default;
  AttentionHead(ParameterSet<Real>& params, const std::string& prefix,
                std::size_t annotation_dim, std::size_t state_dim, std::size_t alignment_dim);

  /// a_j·W_a + b for every position; independent of the decoder state, so it
  /// is computed once per source batch.
  std::vector<Expr<Real>> project(Graph<Real>& g, std::span<const Expr<Real>> annotations) const;

  /// `penalty` is an optional [B×T] constant added to the scores (large
  /// negative at padded positions).
  Attention<Real> attend(Graph<Real>& g, std::span<const Expr<Real>> annotations,
                         std::span<const Expr<Real>> projected, Expr<Real> state,
                         std::optional<Expr<Real>> penalty = std::nullopt) const;

  std::size_t alignment_dim() const { return alignment_dim_; }

 private:
  Tensor<Real>* W_s_ = nullptr;
  Tensor<Real>* W_a_ = nullptr;
  Tensor<Real>* b_ = nullptr;
  Tensor<Real>* v_ = nullptr;
  std::size_t alignment_dim_ = 0;
};

template <typename Real>
struct CgruOutput {
  Expr<Real> hidden;   // h_t
  Expr<Real> context;  // c_t
  Expr<Real> weights;  // attention over source positions
};

/// Conditional GRU: s = GRU1(y_{t−1}, h_{t−1}); c = attend(s); h = GRU2(c, s).
template <typename Real>
class CgruDecoder {
 public:
  CgruDecoder() = default;
  CgruDecoder(ParameterSet<Real>& params, const std::string& prefix, std::size_t emb_dim,
              std::size_t annotation_dim, std::size_t hidden_dim, std::size_t alignment_dim,
              InitMode init_mode);

  /// zero: h₀ = 0. mean_state: h₀ = tanh(mean_j(a_j)·W_init + b_init), the
  /// mean taken over unmasked positions.
  Expr<Real> initial_state(Graph<Real>& g, std::span<const Expr<Real>> annotations,
                           Masks<Real> masks = {}) const;

  CgruOutput<Real> step(Graph<Real>& g, Expr<Real> y_prev_emb, Expr<Real> h_prev,
                        std::span<const Expr<Real>> annotations,
                        std::span<const Expr<Real>> projected,
                        std::optional<Expr<Real>> penalty = std::nullopt) const;

  const AttentionHead<Real>& attention() const { return attention_; }
  InitMode init_mode() const { return init_mode_; }
  std::size_t hidden_dim() const { return hidden_dim_; }

 private:
  GruCell<Real> gru1_, gru2_;
  AttentionHead<Real> attention_;
  Tensor<Real>* W_init_ = nullptr;
  Tensor<Real>* b_init_ = nullptr;
  InitMode init_mode_ = InitMode::mean_state;
  std::size_t hidden_dim_ = 0;
};

/// conditional: o = tanh(h·W_h + y_{t−1} + c·W_c + b)
/// simple:      o = tanh(h·W_h + b)
/// logits = o·W_oᵀ + bias_o
///
/// o has the embedding dimension so that W_o can be an embedding table.
template <typename Real>
class OutputHead {
 public:
  OutputHead() = default;
  /// `projection` is the [vocab × emb] table (possibly a tied embedding).
  OutputHead(ParameterSet<Real>& params, const std::string& prefix, std::size_t state_dim,
             std::size_t annotation_dim, std::size_t emb_dim, Tensor<Real>& projection,
             const std::string& bias_name, OutputMode mode);

  /// The pre-softmax activation o_t.
  Expr<Real> hidden(Graph<Real>& g, Expr<Real> h, Expr<Real> y_prev_emb, Expr<Real> c) const;
  Expr<Real> logits(Graph<Real>& g, Expr<Real> o) const;
  Expr<Real> operator()(Graph<Real>& g, Expr<Real> h, Expr<Real> y_prev_emb,
                        Expr<Real> c) const {
    return logits(g, hidden(g, h, y_prev_emb, c));
  }

  OutputMode mode() const { return mode_; }

 private:
  Tensor<Real>* W_h_ = nullptr;
  Tensor<Real>* W_c_ = nullptr;
  Tensor<Real>* b_ = nullptr;
  Tensor<Real>* W_o_ = nullptr;
  Tensor<Real>* bias_o_ = nullptr;
  OutputMode mode_ = OutputMode::conditional;
};

}  // namespace knmt
