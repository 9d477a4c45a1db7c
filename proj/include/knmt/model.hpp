#pragma once

// The attentive encoder-decoder: bidirectional layer-normalized GRU encoder,
// conditional GRU decoder with additive attention, and an output head that
// optionally emits a second (factor) stream.

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "knmt/autodiff.hpp"
#include "knmt/layers.hpp"
#include "knmt/params.hpp"
#include "knmt/vocab.hpp"

namespace knmt {

enum class H2oMode { shared, separate };
std::string to_string(H2oMode m);
H2oMode parse_h2o_mode(const std::string& s);

struct ModelConfig {
  std::size_t emb_dim = 200;
  std::size_t enc_hidden = 500;
  std::size_t dec_hidden = 500;
  /// 0 means 2·enc_hidden (the annotation size).
  std::size_t alignment_dim = 0;
  TyingMode tying_mode = TyingMode::tied2;
  InitMode init_mode = InitMode::mean_state;
  OutputMode output_mode = OutputMode::conditional;
  bool factored = false;
  H2oMode h2o_mode = H2oMode::shared;
  double dropout_p = 0.2;

  std::size_t annotation_dim() const { return 2 * enc_hidden; }
  std::size_t effective_alignment_dim() const {
    return alignment_dim ? alignment_dim : annotation_dim();
  }

  /// Sets one field from its textual form; ConfigError on unknown keys or
  /// malformed values. Returns false if `key` is not a model key.
  bool set(const std::string& key, const std::string& value);
  /// "key=value" pairs in a fixed order.
  std::vector<std::pair<std::string, std::string>> items() const;
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Closed-form parameter count for a configuration and vocabulary sizes.
std::size_t param_count_formula(const ModelConfig& config, std::size_t src_vocab,
                                std::size_t tgt_vocab, std::size_t factor_vocab = 0);

/// Padded, time-major id matrices for one minibatch.
struct TrainBatch {
  std::size_t size = 0;
  std::vector<std::vector<int>> src;         // [T_src][B], eos-terminated, pad-filled
  std::vector<std::vector<int>> tgt_in;      // [T_tgt][B], bos then target
  std::vector<std::vector<int>> tgt_out;     // [T_tgt][B], target then eos
  std::vector<std::vector<int>> factor_out;  // [T_tgt][B], factored only
  std::vector<std::size_t> src_len;          // including eos
  std::vector<std::size_t> tgt_len;          // including eos
};

/// Decoder inputs that depend only on the source sentence.
template <typename Real>
struct EncodedSource {
  std::vector<Tensor<Real>> annotations;  // per position, [1 × 2H]
  std::vector<Tensor<Real>> projected;    // per position, [1 × A]
  Tensor<Real> initial_state;             // [1 × D]
};

template <typename Real>
struct StepOutput {
  Tensor<Real> hidden;     // [K × D]
  Tensor<Real> probs;      // [K × V_target]
  Tensor<Real> factor_probs;  // [K × V_factor]; empty unless factored
  Tensor<Real> attention;  // [K × T_src]
};

template <typename Real>
class Seq2SeqModel {
 public:
  /// Registers every parameter (values zero). Throws ConfigError on an
  /// invalid configuration or a tied3 model whose vocabularies differ.
  Seq2SeqModel(ModelConfig config, Vocabulary source, Vocabulary target,
               std::optional<Vocabulary> factors = std::nullopt);

  /// Registers and Xavier-initializes from `seed`.
  static Seq2SeqModel build(ModelConfig config, Vocabulary source, Vocabulary target,
                            std::optional<Vocabulary> factors, std::uint64_t seed);

  Seq2SeqModel(Seq2SeqModel&&) noexcept = default;
  Seq2SeqModel& operator=(Seq2SeqModel&&) noexcept = default;

  /// Deep copy of configuration, vocabularies and values.
  Seq2SeqModel clone() const;

  const ModelConfig& config() const { return config_; }
  const Vocabulary& source_vocab() const { return src_vocab_; }
  const Vocabulary& target_vocab() const { return tgt_vocab_; }
  const Vocabulary& factor_vocab() const { return *factor_vocab_; }
  bool factored() const { return config_.factored; }

  ParameterSet<Real>& params() { return *params_; }
  const ParameterSet<Real>& params() const { return *params_; }
  std::size_t count_params() const { return params_->count(); }

  TrainBatch make_batch(const std::vector<std::vector<int>>& src,
                        const std::vector<std::vector<int>>& tgt,
                        const std::vector<std::vector<int>>& factors = {}) const;

  struct Loss {
    Expr<Real> total;
    Expr<Real> lemma;
    std::optional<Expr<Real>> factor;
  };
  /// Mean over sentences of the per-token mean NLL. Factored models add the
  /// factor stream's NLL (no factor is predicted at the end-of-sentence step).
  /// `rng` drives dropout when `training`.
  Loss loss(Graph<Real>& g, const TrainBatch& batch, bool training, Rng* rng) const;

  /// Single-sentence loss without dropout or gradient.
  double forward_loss(const std::vector<int>& src, const std::vector<int>& tgt,
                      const std::vector<int>& factors = {}) const;

  EncodedSource<Real> encode_source(std::span<const int> src_ids) const;
  /// One decoder step for K hypotheses. `hidden` is [K × D] and `prev` holds
  /// the K previous target ids (bos at the first step).
  StepOutput<Real> step(const EncodedSource<Real>& src, const Tensor<Real>& hidden,
                        std::span<const int> prev) const;

  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static Seq2SeqModel load(std::istream& in);
  static Seq2SeqModel load(const std::string& path);

 private:
  struct Layers;

  ModelConfig config_;
  Vocabulary src_vocab_, tgt_vocab_;
  std::optional<Vocabulary> factor_vocab_;
  std::unique_ptr<ParameterSet<Real>> params_;
  std::unique_ptr<Layers> layers_;
};

template <typename Real>
struct Seq2SeqModel<Real>::Layers {
  EmbeddingTable<Real> emb;
  GruCell<Real> enc_fwd, enc_bwd;
  CgruDecoder<Real> dec;
  OutputHead<Real> out;
  std::optional<OutputHead<Real>> out_factor;  // separate h2o
  Tensor<Real>* W_f = nullptr;                 // shared h2o factor projection
  Tensor<Real>* bias_f = nullptr;
};

/// FNV-1a over every parameter value in canonical order.
template <typename Real>
std::uint64_t parameter_hash(const Seq2SeqModel<Real>& model);

}  // namespace knmt
