#include "knmt/trainer.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <thread>

#include "knmt/bpe.hpp"
#include "knmt/config.hpp"
#include "knmt/error.hpp"
#include "knmt/log.hpp"
#include "knmt/parallel.hpp"
#include "knmt/reinflect.hpp"
#include "knmt/search.hpp"

namespace knmt {

template <typename Real>
Adam<Real>::Adam(double lr, double beta1, double beta2, double epsilon)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

template <typename Real>
void Adam<Real>::step(ParameterSet<Real>& params, bool checked) {
  auto tensors = params.tensors();
  if (m_.empty()) {
    for (const auto* t : tensors) {
      m_.emplace_back(t->size(), 0.0);
      v_.emplace_back(t->size(), 0.0);
    }
  }
  if (m_.size() != tensors.size()) throw ContractError("adam: parameter set changed shape");
  if (checked) {
    const auto& names = params.names();
    for (std::size_t i = 0; i < tensors.size(); ++i)
      for (const Real g : tensors[i]->grad)
        if (!std::isfinite(static_cast<double>(g)))
          throw NumericError("adam: non-finite gradient in '" + names[i] + "'");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& p = *tensors[i];
    if (p.grad.size() != p.size()) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = static_cast<double>(p.grad[j]);
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      const double mh = m[j] / c1, vh = v[j] / c2;
      p.data[j] = static_cast<Real>(static_cast<double>(p.data[j]) - lr_ * mh / (std::sqrt(vh) + eps_));
    }
  }
}

template <typename Real>
double global_grad_norm(const ParameterSet<Real>& params) {
  double sq = 0.0;
  for (const auto* t : params.tensors())
    for (const Real g : t->grad) sq += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sq);
}

template <typename Real>
double clip_global_norm(ParameterSet<Real>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && std::isfinite(norm)) {
    const double scale = max_norm / norm;
    for (auto* t : params.tensors())
      for (Real& g : t->grad) g = static_cast<Real>(static_cast<double>(g) * scale);
  }
  return norm;
}

template class Adam<float>;
template class Adam<double>;
template double clip_global_norm<float>(ParameterSet<float>&, double);
template double clip_global_norm<double>(ParameterSet<double>&, double);
template double global_grad_norm<float>(const ParameterSet<float>&);
template double global_grad_norm<double>(const ParameterSet<double>&);

bool TrainSchedule::set(const std::string& key, const std::string& value) {
  if (key == "lr") lr = parse_real(key, value);
  else if (key == "batch_size") batch_size = parse_count(key, value, false);
  else if (key == "max_norm") max_norm = parse_real(key, value);
  else if (key == "patience") patience = parse_count(key, value, false);
  else if (key == "validate_fraction") validate_fraction = parse_real(key, value);
  else if (key == "validate_every") validate_every = parse_count(key, value, true);
  else if (key == "max_epochs") max_epochs = parse_count(key, value, false);
  else if (key == "max_updates") {
    if (value == "none") max_updates.reset();
    else max_updates = parse_count(key, value, true);
  }
  else if (key == "final_beam") final_beam = parse_count(key, value, true);
  else if (key == "bleu_on_words") bleu_on_words = parse_bool(key, value);
  else if (key == "smooth_bleu") smooth_bleu = parse_bool(key, value);
  else if (key == "checked") checked = parse_bool(key, value);
  else if (key == "jobs") jobs = parse_count(key, value, false);
  else return false;
  return true;
}

std::vector<std::pair<std::string, std::string>> TrainSchedule::items() const {
  const auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {{"lr", format_real(lr)},
          {"batch_size", std::to_string(batch_size)},
          {"max_norm", format_real(max_norm)},
          {"patience", std::to_string(patience)},
          {"validate_fraction", format_real(validate_fraction)},
          {"validate_every", std::to_string(validate_every)},
          {"max_epochs", std::to_string(max_epochs)},
          {"max_updates", max_updates ? std::to_string(*max_updates) : "none"},
          {"final_beam", std::to_string(final_beam)},
          {"bleu_on_words", b(bleu_on_words)},
          {"smooth_bleu", b(smooth_bleu)},
          {"checked", b(checked)},
          {"jobs", std::to_string(jobs)}};
}

void TrainSchedule::validate() const {
  if (!(lr > 0)) throw ConfigError("lr: must be positive");
  if (!(max_norm > 0)) throw ConfigError("max_norm: must be positive");
  if (!(validate_fraction > 0 && validate_fraction <= 1)) {
    throw ConfigError("validate_fraction: must be in (0, 1]");
  }
  if (!batch_size || !patience || !max_epochs || !jobs) {
    throw ConfigError("batch_size, patience, max_epochs and jobs must be positive");
  }
}

std::string format_record(const ValidationRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu\t%.3f\t%.6f\t%.2f\t%.2f", r.update, r.epoch, r.loss, r.bleu,
                r.best);
  return buf;
}

namespace {

Sentence scored_tokens(const Sentence& lemmas, const Sentence* factors, bool on_words) {
  if (!factors) return on_words ? detokenize_bpe(lemmas).words : lemmas;
  Sentence l = lemmas, f = *factors;
  if (on_words) std::tie(l, f) = join_factored_pieces(lemmas, *factors);
  Sentence out;
  for (std::size_t i = 0; i < l.size(); ++i) out.push_back(escape_lemma(l[i]) + "|" + f[i]);
  return out;
}

struct Encoded {
  std::vector<std::vector<int>> src, tgt, factors;
};

Encoded encode_corpus(const Seq2SeqModel<float>& model, const ParallelCorpus& c) {
  Encoded e;
  for (std::size_t i = 0; i < c.size(); ++i) {
    e.src.push_back(model.source_vocab().encode(c.source[i], false));
    e.tgt.push_back(model.target_vocab().encode(c.target[i], false));
    if (model.factored()) e.factors.push_back(model.factor_vocab().encode(c.factors[i], false));
  }
  return e;
}

}  // namespace

BleuReport validation_bleu(const Seq2SeqModel<float>& model, const ParallelCorpus& valid,
                           std::size_t beam, bool on_words, bool smooth, std::size_t jobs) {
  if (valid.empty()) throw ContractError("validation set is empty");
  if (model.factored() != valid.factored()) {
    throw ContractError("validation set and model disagree on factors");
  }
  const auto hyps = parallel_map(valid.size(), jobs, [&](std::size_t i) {
    const auto src = model.source_vocab().encode(valid.source[i], false);
    const std::size_t max_len = default_max_len(src.size());
    Hypothesis h;
    if (beam <= 1) {
      h = greedy_decode(model, src, max_len);
    } else {
      SearchOptions opt;
      opt.beam = beam;
      opt.max_len = max_len;
      h = model.factored() ? factored_beam_decode(model, src, opt).front()
                           : beam_decode(model, src, opt).front();
    }
    const auto ids = h.words();
    const Sentence lemmas = model.target_vocab().decode(ids);
    if (!model.factored()) return scored_tokens(lemmas, nullptr, on_words);
    Sentence f;
    for (const int id : h.factors) f.push_back(model.factor_vocab().token(id));
    return scored_tokens(lemmas, &f, on_words);
  });
  std::vector<Sentence> refs;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    refs.push_back(scored_tokens(valid.target[i], valid.factored() ? &valid.factors[i] : nullptr,
                                 on_words));
  }
  return bleu(hyps, refs, smooth);
}

TrainResult train(Seq2SeqModel<float> model, const ParallelCorpus& corpus,
                  const ParallelCorpus& valid, const TrainSchedule& s, std::uint64_t seed,
                  std::ostream* log, const TrainHooks& hooks) {
  s.validate();
  if (corpus.empty()) throw ContractError("train: empty corpus");
  if (valid.empty()) throw ContractError("train: empty validation set");
  corpus.validate();
  if (corpus.factored() != model.factored()) {
    throw ContractError("train: corpus and model disagree on factors");
  }
  const Encoded data = encode_corpus(model, corpus);
  Rng shuffle = Rng::named(seed, "shuffle");
  Rng dropout = Rng::named(seed, "dropout");
  Adam<float> adam(s.lr);

  TrainResult r{model.clone(), {}, 0, -std::numeric_limits<double>::infinity(), {}, false, ""};
  bool have_best = false;
  std::size_t bad = 0;
  double loss_sum = 0.0;
  std::size_t loss_n = 0;
  std::size_t since_validation = 0;

  const auto do_validate = [&](double epoch) {
    const double b = validation_bleu(model, valid, 1, s.bleu_on_words, s.smooth_bleu, s.jobs).bleu;
    ValidationRecord rec{r.updates, epoch, loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0,
                         b, 0.0};
    if (!have_best || b > r.best_bleu) {
      r.best = model.clone();
      r.best_bleu = b;
      have_best = true;
      bad = 0;
    } else {
      ++bad;
    }
    rec.best = r.best_bleu;
    r.log.push_back(rec);
    if (log) *log << format_record(rec) << '\n' << std::flush;
    log_debug("validation ", format_record(rec));
    loss_sum = 0.0;
    loss_n = 0;
    since_validation = 0;
    return bad >= s.patience;
  };

  bool stop = false;
  for (std::size_t epoch = 0; epoch < s.max_epochs && !stop; ++epoch) {
    const auto batches = make_batches(corpus, s.batch_size, shuffle.next());
    const std::size_t interval =
        s.validate_every
            ? s.validate_every
            : std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                           s.validate_fraction * static_cast<double>(batches.size()))));
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      if (s.max_updates && r.updates >= *s.max_updates) {
        stop = true;
        r.stop_reason = "max_updates";
        break;
      }
      std::vector<std::vector<int>> src, tgt, fac;
      for (const auto i : batches[bi]) {
        src.push_back(data.src[i]);
        tgt.push_back(data.tgt[i]);
        if (model.factored()) fac.push_back(data.factors[i]);
      }
      const TrainBatch tb = model.make_batch(src, tgt, fac);
      model.params().zero_grad();
      double value = 0.0;
      try {
        Graph<float> g(GraphOptions{s.checked, true});
        const auto loss = model.loss(g, tb, true, &dropout);
        value = static_cast<double>(loss.total.value()[0]);
        if (std::isfinite(value)) g.backward(loss.total);
      } catch (const NumericError& e) {
        log_info("training diverged at update ", r.updates + 1, ": ", e.what());
        value = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(value)) {
        r.diverged = true;
        r.stop_reason = "diverged";
        if (!have_best) r.best = model.clone();
        stop = true;
        break;
      }
      clip_global_norm(model.params(), s.max_norm);
      adam.step(model.params(), s.checked);
      ++r.updates;
      ++since_validation;
      loss_sum += value;
      ++loss_n;
      if (hooks.after_update) hooks.after_update(r.updates, model);
      const bool due = s.validate_every ? r.updates % interval == 0 : (bi + 1) % interval == 0;
      if (due) {
        const double ep = static_cast<double>(epoch) +
                          static_cast<double>(bi + 1) / static_cast<double>(batches.size());
        if (do_validate(ep)) {
          stop = true;
          r.stop_reason = "patience";
          break;
        }
      }
    }
    if (!stop && epoch + 1 == s.max_epochs) r.stop_reason = "max_epochs";
  }
  if (!r.diverged && since_validation > 0 && r.stop_reason != "patience") {
    do_validate(static_cast<double>(r.log.empty() ? 0.0 : r.log.back().epoch));
  }
  if (!have_best && !r.diverged) r.best = model.clone();
  if (!have_best) r.best_bleu = 0.0;
  if (s.final_beam > 1 && have_best) {
    r.final_beam_bleu =
        validation_bleu(r.best, valid, s.final_beam, s.bleu_on_words, s.smooth_bleu, s.jobs).bleu;
    log_info("selected checkpoint: greedy BLEU ", r.best_bleu, ", beam ", s.final_beam, " BLEU ",
             *r.final_beam_bleu);
  }
  return r;
}

TrainResult finetune(Seq2SeqModel<float> model, const FinetuneSpec& spec,
                     const ParallelCorpus& corpus, const ParallelCorpus& valid,
                     TrainSchedule schedule, std::uint64_t seed, std::ostream* log,
                     const Vocabulary* src_vocab, const Vocabulary* tgt_vocab) {
  if (src_vocab && !(*src_vocab == model.source_vocab())) {
    throw ConfigError("finetune: source vocabulary differs from the checkpoint's");
  }
  if (tgt_vocab && !(*tgt_vocab == model.target_vocab())) {
    throw ConfigError("finetune: target vocabulary differs from the checkpoint's");
  }
  if (corpus.factored() != model.factored()) {
    throw ConfigError(std::string("finetune: checkpoint is ") +
                      (model.factored() ? "factored" : "a word model") + " but the corpus is " +
                      (corpus.factored() ? "factored" : "not"));
  }
  schedule.lr = spec.lr;
  schedule.validate_every = spec.validate_every;
  return train(std::move(model), corpus, valid, schedule, seed, log);
}

TrainResult finetune(const FinetuneSpec& spec, const ParallelCorpus& corpus,
                     const ParallelCorpus& valid, TrainSchedule schedule, std::uint64_t seed,
                     std::ostream* log, const Vocabulary* src_vocab, const Vocabulary* tgt_vocab) {
  return finetune(Seq2SeqModel<float>::load(spec.init_checkpoint), spec, corpus, valid,
                  std::move(schedule), seed, log, src_vocab, tgt_vocab);
}

std::vector<TrainResult> train_replicas(
    const std::function<Seq2SeqModel<float>(std::uint64_t)>& make_model,
    const ParallelCorpus& corpus, const ParallelCorpus& valid, const TrainSchedule& schedule,
    const std::vector<std::uint64_t>& seeds, bool parallel) {
  auto results = parallel_map(seeds.size(), parallel ? seeds.size() : 1, [&](std::size_t i) {
    return std::optional<TrainResult>(
        train(make_model(seeds[i]), corpus, valid, schedule, seeds[i]));
  });
  std::vector<TrainResult> out;
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

}  // namespace knmt
