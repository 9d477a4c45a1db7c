#pragma once

// Adam training with global-norm clipping, BLEU-based early stopping and
// best-checkpoint selection.

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "knmt/bleu.hpp"
#include "knmt/corpus.hpp"
#include "knmt/model.hpp"

namespace knmt {

template <typename Real>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  /// One bias-corrected update of every distinct tensor from its gradient.
  /// `checked`: NumericError naming the parameter on a non-finite gradient.
  void step(ParameterSet<Real>& params, bool checked = false);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::size_t t() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Scales every gradient so the global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
template <typename Real>
double clip_global_norm(ParameterSet<Real>& params, double max_norm);

template <typename Real>
double global_grad_norm(const ParameterSet<Real>& params);

struct TrainSchedule {
  double lr = 4e-4;
  std::size_t batch_size = 64;
  double max_norm = 5.0;
  std::size_t patience = 20;
  /// Validation cadence: every `validate_every` updates when non-zero,
  /// otherwise every `validate_fraction` of an epoch.
  double validate_fraction = 0.25;
  std::size_t validate_every = 0;
  std::size_t max_epochs = 100;
  /// Unlimited when unset ("none" in config text).
  std::optional<std::size_t> max_updates;
  /// Beam used to re-score the selected checkpoint at the end (0: skip).
  std::size_t final_beam = 12;
  /// BLEU on words: BPE pieces are joined before scoring.
  bool bleu_on_words = true;
  bool smooth_bleu = false;
  /// Abort with NumericError on the first non-finite value.
  bool checked = false;
  /// Sentence-parallel validation decoding.
  std::size_t jobs = 1;

  /// Sets one field from text; false if `key` is not a schedule key.
  bool set(const std::string& key, const std::string& value);
  std::vector<std::pair<std::string, std::string>> items() const;
  void validate() const;
};

struct ValidationRecord {
  std::size_t update = 0;
  double epoch = 0.0;
  double loss = 0.0;  // mean training loss since the previous validation
  double bleu = 0.0;
  double best = 0.0;
};

/// "update<TAB>epoch<TAB>loss<TAB>valid_bleu<TAB>best"
std::string format_record(const ValidationRecord& r);

struct TrainResult {
  Seq2SeqModel<float> best;
  std::vector<ValidationRecord> log;
  std::size_t updates = 0;
  double best_bleu = 0.0;
  /// Beam re-score of `best` (schedule.final_beam), when run.
  std::optional<double> final_beam_bleu;
  bool diverged = false;
  std::string stop_reason;
};

struct TrainHooks {
  /// Called after every optimizer step with the update count; gradients are
  /// still the clipped ones used by the step.
  std::function<void(std::size_t, Seq2SeqModel<float>&)> after_update;
};

/// Greedy (or beam) decoding of `valid` sources scored against its targets.
/// Factored models are scored on "lemma|factors" tokens.
BleuReport validation_bleu(const Seq2SeqModel<float>& model, const ParallelCorpus& valid,
                           std::size_t beam, bool on_words, bool smooth, std::size_t jobs = 1);

/// Trains from the model's current parameters. Throws ContractError on an
/// empty corpus or validation set. Randomness comes from named sub-streams
/// of `seed` ("shuffle", "dropout"). Validation lines go to `log` when set.
TrainResult train(Seq2SeqModel<float> model, const ParallelCorpus& corpus,
                  const ParallelCorpus& valid, const TrainSchedule& schedule, std::uint64_t seed,
                  std::ostream* log = nullptr, const TrainHooks& hooks = {});

struct FinetuneSpec {
  std::string init_checkpoint;
  double lr = 1e-4;
  std::size_t validate_every = 5000;
};

/// Continues training a checkpoint with the fine-tuning rate and cadence.
/// ConfigError when the given data vocabularies differ from the
/// checkpoint's or the corpus kind (factored or not) does not match it.
TrainResult finetune(Seq2SeqModel<float> model, const FinetuneSpec& spec,
                     const ParallelCorpus& corpus, const ParallelCorpus& valid,
                     TrainSchedule schedule, std::uint64_t seed, std::ostream* log = nullptr,
                     const Vocabulary* data_source_vocab = nullptr,
                     const Vocabulary* data_target_vocab = nullptr);
TrainResult finetune(const FinetuneSpec& spec, const ParallelCorpus& corpus,
                     const ParallelCorpus& valid, TrainSchedule schedule, std::uint64_t seed,
                     std::ostream* log = nullptr, const Vocabulary* data_source_vocab = nullptr,
                     const Vocabulary* data_target_vocab = nullptr);

/// Independent replicas, one per seed, run on separate threads.
std::vector<TrainResult> train_replicas(
    const std::function<Seq2SeqModel<float>(std::uint64_t)>& make_model,
    const ParallelCorpus& corpus, const ParallelCorpus& valid, const TrainSchedule& schedule,
    const std::vector<std::uint64_t>& seeds, bool parallel = true);

/// Decoder step budget for a source of `n` tokens.
inline std::size_t default_max_len(std::size_t n) { return 2 * n + 10; }

}  // namespace knmt
