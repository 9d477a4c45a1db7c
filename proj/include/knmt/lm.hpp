#pragma once

// Recurrent language models for n-best rescoring.

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "knmt/layers.hpp"
#include "knmt/params.hpp"
#include "knmt/vocab.hpp"

namespace knmt {

enum class LmKind { simple_rnn, gru };
std::string to_string(LmKind k);
LmKind parse_lm_kind(const std::string& s);

struct LmConfig {
  LmKind kind = LmKind::gru;
  std::size_t emb_dim = 64;
  std::size_t hidden = 128;
  double dropout_p = 0.0;

  /// False if `key` is not an LM key; ConfigError on bad values.
  bool set(const std::string& key, const std::string& value);
  std::vector<std::pair<std::string, std::string>> items() const;
  void validate() const;
  bool operator==(const LmConfig&) const = default;
};

/// Embedding, one recurrent layer (tanh RNN or GRU) and a softmax output.
/// Sentences are conditioned on bos and scored through eos; the state is
/// reset per sentence.
template <typename Real>
class LanguageModel {
 public:
  LanguageModel(LmConfig config, Vocabulary vocab);
  static LanguageModel build(LmConfig config, Vocabulary vocab, std::uint64_t seed);

  LanguageModel(LanguageModel&&) noexcept = default;
  LanguageModel& operator=(LanguageModel&&) noexcept = default;
  LanguageModel clone() const;

  const LmConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterSet<Real>& params() { return *params_; }
  const ParameterSet<Real>& params() const { return *params_; }

  /// Summed NLL over all tokens (eos included) of the batch, divided by
  /// the token count. `ids` holds vocabulary ids without eos.
  Expr<Real> loss(Graph<Real>& g, const std::vector<std::vector<int>>& ids, bool training,
                  Rng* rng) const;

  /// Σ ln P over the sentence's tokens and eos.
  double score_ids(std::span<const int> ids) const;
  double score(const Sentence& tokens) const;
  /// Next-token log-distribution after `prefix` (bos implied).
  std::vector<double> next_log_probs(std::span<const int> prefix) const;
  /// exp(total NLL / total tokens) over the corpus; eos counts as a token.
  double perplexity(const std::vector<Sentence>& corpus) const;

  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static LanguageModel load(std::istream& in);
  static LanguageModel load(const std::string& path);

 private:
  Expr<Real> step(Graph<Real>& g, Expr<Real> x, Expr<Real> h) const;
  Expr<Real> logits(Graph<Real>& g, Expr<Real> h) const;

  LmConfig config_;
  Vocabulary vocab_;
  std::unique_ptr<ParameterSet<Real>> params_;
  std::unique_ptr<GruCell<Real>> gru_;
  Tensor<Real>*emb_ = nullptr, *W_ = nullptr, *U_ = nullptr, *b_ = nullptr;
  Tensor<Real>*W_out_ = nullptr, *b_out_ = nullptr;
};

struct LmSchedule {
  double lr = 1e-3;
  std::size_t batch_size = 32;
  double max_norm = 5.0;
  std::size_t max_epochs = 20;
  /// Validations (once per epoch) without a perplexity decrease.
  std::size_t patience = 3;

  bool set(const std::string& key, const std::string& value);
  std::vector<std::pair<std::string, std::string>> items() const;
};

struct LmTrainResult {
  LanguageModel<float> best;
  std::vector<double> valid_perplexity;  // one per epoch
  double best_perplexity = 0.0;
};

/// Next-token training with Adam and clipping; the checkpoint with the
/// lowest validation perplexity is kept. ContractError on empty input.
LmTrainResult lm_train(LanguageModel<float> model, const std::vector<Sentence>& train,
                       const std::vector<Sentence>& valid, const LmSchedule& schedule,
                       std::uint64_t seed, std::ostream* log = nullptr);

}  // namespace knmt
