#include "knmt/lm.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "knmt/config.hpp"
#include "knmt/error.hpp"
#include "knmt/log.hpp"
#include "knmt/trainer.hpp"

namespace knmt {

std::string to_string(LmKind k) { return k == LmKind::gru ? "gru" : "simple-rnn"; }

LmKind parse_lm_kind(const std::string& s) {
  if (s == "gru") return LmKind::gru;
  if (s == "simple-rnn") return LmKind::simple_rnn;
  throw ConfigError("lm kind: expected simple-rnn|gru, got '" + s + "'");
}

bool LmConfig::set(const std::string& key, const std::string& value) {
  if (key == "lm_kind") kind = parse_lm_kind(value);
  else if (key == "lm_emb_dim") emb_dim = parse_count(key, value, false);
  else if (key == "lm_hidden") hidden = parse_count(key, value, false);
  else if (key == "lm_dropout_p") dropout_p = parse_real(key, value);
  else return false;
  return true;
}

std::vector<std::pair<std::string, std::string>> LmConfig::items() const {
  return {{"lm_kind", to_string(kind)},
          {"lm_emb_dim", std::to_string(emb_dim)},
          {"lm_hidden", std::to_string(hidden)},
          {"lm_dropout_p", format_real(dropout_p)}};
}

void LmConfig::validate() const {
  if (!emb_dim || !hidden) throw ConfigError("lm_emb_dim and lm_hidden must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("lm_dropout_p: must be in [0, 1)");
}

bool LmSchedule::set(const std::string& key, const std::string& value) {
  if (key == "lm_lr") lr = parse_real(key, value);
  else if (key == "lm_batch_size") batch_size = parse_count(key, value, false);
  else if (key == "lm_max_norm") max_norm = parse_real(key, value);
  else if (key == "lm_max_epochs") max_epochs = parse_count(key, value, false);
  else if (key == "lm_patience") patience = parse_count(key, value, false);
  else return false;
  return true;
}

std::vector<std::pair<std::string, std::string>> LmSchedule::items() const {
  return {{"lm_lr", format_real(lr)},
          {"lm_batch_size", std::to_string(batch_size)},
          {"lm_max_norm", format_real(max_norm)},
          {"lm_max_epochs", std::to_string(max_epochs)},
          {"lm_patience", std::to_string(patience)}};
}

template <typename Real>
LanguageModel<Real>::LanguageModel(LmConfig config, Vocabulary vocab)
    : config_(config), vocab_(std::move(vocab)), params_(std::make_unique<ParameterSet<Real>>()) {
  config_.validate();
  if (!vocab_.reserved()) throw ConfigError("language model vocabulary must be reserved");
  const std::size_t V = vocab_.size(), E = config_.emb_dim, H = config_.hidden;
  emb_ = &params_->add("lm.emb", {V, E});
  if (config_.kind == LmKind::gru) {
    gru_ = std::make_unique<GruCell<Real>>(*params_, "lm.gru", E, H, false);
  } else {
    W_ = &params_->add("lm.rnn.W", {E, H});
    U_ = &params_->add("lm.rnn.U", {H, H});
    b_ = &params_->add("lm.rnn.b", {H});
  }
  W_out_ = &params_->add("lm.out.W", {H, V});
  b_out_ = &params_->add("lm.out.b", {V});
}

template <typename Real>
LanguageModel<Real> LanguageModel<Real>::build(LmConfig config, Vocabulary vocab,
                                               std::uint64_t seed) {
  LanguageModel m(config, std::move(vocab));
  Rng rng = Rng::named(seed, "init");
  m.params_->xavier_init(rng);
  return m;
}

template <typename Real>
LanguageModel<Real> LanguageModel<Real>::clone() const {
  LanguageModel m(config_, vocab_);
  m.params_->copy_values_from(*params_);
  return m;
}

template <typename Real>
Expr<Real> LanguageModel<Real>::step(Graph<Real>& g, Expr<Real> x, Expr<Real> h) const {
  if (gru_) return gru_->step(g, x, h);
  return tanh(add_bias(matmul(x, g.parameter(*W_)) + matmul(h, g.parameter(*U_)), g.parameter(*b_)));
}

template <typename Real>
Expr<Real> LanguageModel<Real>::logits(Graph<Real>& g, Expr<Real> h) const {
  return add_bias(matmul(h, g.parameter(*W_out_)), g.parameter(*b_out_));
}

template <typename Real>
Expr<Real> LanguageModel<Real>::loss(Graph<Real>& g, const std::vector<std::vector<int>>& ids,
                                     bool training, Rng* rng) const {
  const std::size_t B = ids.size();
  if (B == 0) throw ContractError("lm loss: empty batch");
  std::size_t T = 0, tokens = 0;
  for (const auto& s : ids) {
    T = std::max(T, s.size() + 1);
    tokens += s.size() + 1;
  }
  const double p = training ? config_.dropout_p : 0.0;
  Rng dummy(0);
  Rng& drop = rng ? *rng : dummy;
  const Expr<Real> table = g.parameter(*emb_);
  Expr<Real> h = g.constant(Tensor<Real>({B, config_.hidden}));
  std::vector<Expr<Real>> terms;
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<int> in(B), out(B);
    std::vector<Real> w(B, Real(0));
    for (std::size_t b = 0; b < B; ++b) {
      const auto& s = ids[b];
      in[b] = t == 0 ? Vocabulary::kBos : (t - 1 < s.size() ? s[t - 1] : Vocabulary::kPad);
      out[b] = t < s.size() ? s[t] : (t == s.size() ? Vocabulary::kEos : Vocabulary::kPad);
      if (t <= s.size()) w[b] = Real(-1) / static_cast<Real>(tokens);
    }
    const Expr<Real> x = dropout(g.lookup(table, in), p, training, drop);
    h = step(g, x, h);
    const Expr<Real> lp = log_softmax(logits(g, dropout(h, p, training, drop)));
    terms.push_back(sum(g.pick(lp, out) * g.constant({B, 1}, std::move(w))));
  }
  Expr<Real> total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = total + terms[i];
  return total;
}

template <typename Real>
double LanguageModel<Real>::score_ids(std::span<const int> ids) const {
  Graph<Real> g(GraphOptions{false, false});
  const Expr<Real> table = g.parameter(*emb_);
  Expr<Real> h = g.constant(Tensor<Real>({1, config_.hidden}));
  double total = 0.0;
  int prev = Vocabulary::kBos;
  for (std::size_t t = 0; t <= ids.size(); ++t) {
    const int in[] = {prev};
    h = step(g, g.lookup(table, in), h);
    const auto lp = log_softmax(logits(g, h)).value();
    const int next = t < ids.size() ? ids[t] : Vocabulary::kEos;
    total += static_cast<double>(lp[static_cast<std::size_t>(next)]);
    prev = next;
  }
  return total;
}

template <typename Real>
double LanguageModel<Real>::score(const Sentence& tokens) const {
  const auto ids = vocab_.encode(tokens, false);
  return score_ids(ids);
}

template <typename Real>
std::vector<double> LanguageModel<Real>::next_log_probs(std::span<const int> prefix) const {
  Graph<Real> g(GraphOptions{false, false});
  const Expr<Real> table = g.parameter(*emb_);
  Expr<Real> h = g.constant(Tensor<Real>({1, config_.hidden}));
  int prev = Vocabulary::kBos;
  for (std::size_t t = 0;; ++t) {
    const int in[] = {prev};
    h = step(g, g.lookup(table, in), h);
    if (t == prefix.size()) break;
    prev = prefix[t];
  }
  const auto lp = log_softmax(logits(g, h)).value();
  return {lp.begin(), lp.end()};
}

template <typename Real>
double LanguageModel<Real>::perplexity(const std::vector<Sentence>& corpus) const {
  if (corpus.empty()) throw ContractError("perplexity: empty corpus");
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& s : corpus) {
    nll -= score(s);
    tokens += s.size() + 1;
  }
  return std::exp(nll / static_cast<double>(tokens));
}

namespace {
constexpr const char* kLmMagic = "KNLM1";
}

template <typename Real>
void LanguageModel<Real>::save(std::ostream& out) const {
  out << kLmMagic << "\nconfig";
  for (const auto& [k, v] : config_.items()) out << ' ' << k << '=' << v;
  out << "\nvocab\n";
  vocab_.save(out);
  write_parameter_block(out, *params_);
  if (!out) throw Error("language model: write failed");
}

template <typename Real>
void LanguageModel<Real>::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write language model '" + path + "'");
  save(out);
}

template <typename Real>
LanguageModel<Real> LanguageModel<Real>::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kLmMagic) {
    throw LoadError("language model: bad magic (expected KNLM1)");
  }
  if (!std::getline(in, line)) throw LoadError("language model: truncated before config");
  const auto words = split_words(line);
  if (words.empty() || words[0] != "config") throw LoadError("language model: expected config line");
  LmConfig config;
  for (std::size_t i = 1; i < words.size(); ++i) {
    const auto eq = words[i].find('=');
    try {
      if (eq == std::string::npos || !config.set(words[i].substr(0, eq), words[i].substr(eq + 1))) {
        throw LoadError("language model: bad config entry '" + words[i] + "'");
      }
    } catch (const ConfigError& e) {
      throw LoadError(std::string("language model: ") + e.what());
    }
  }
  if (!std::getline(in, line) || line != "vocab") throw LoadError("language model: expected vocab");
  Vocabulary vocab;
  try {
    vocab = Vocabulary::load(in);
  } catch (const LoadError& e) {
    throw LoadError(std::string("language model: vocab: ") + e.what());
  }
  LanguageModel m(config, std::move(vocab));
  read_parameter_block(in, *m.params_, "language model");
  return m;
}

template <typename Real>
LanguageModel<Real> LanguageModel<Real>::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read language model '" + path + "'");
  return load(in);
}

template class LanguageModel<float>;
template class LanguageModel<double>;

LmTrainResult lm_train(LanguageModel<float> model, const std::vector<Sentence>& train,
                       const std::vector<Sentence>& valid, const LmSchedule& s,
                       std::uint64_t seed, std::ostream* log) {
  if (train.empty()) throw ContractError("lm_train: empty corpus");
  if (valid.empty()) throw ContractError("lm_train: empty validation set");
  if (!s.batch_size || !s.max_epochs || !s.patience) {
    throw ConfigError("lm_batch_size, lm_max_epochs and lm_patience must be positive");
  }
  std::vector<std::vector<int>> data;
  for (const auto& sent : train) data.push_back(model.vocab().encode(sent, false));
  Rng shuffle = Rng::named(seed, "shuffle");
  Rng dropout = Rng::named(seed, "dropout");
  Adam<float> adam(s.lr);
  LmTrainResult r{model.clone(), {}, std::numeric_limits<double>::infinity()};
  std::size_t bad = 0;
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < s.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t updates = 0;
    for (std::size_t start = 0; start < order.size(); start += s.batch_size) {
      std::vector<std::vector<int>> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + s.batch_size); ++k)
        batch.push_back(data[order[k]]);
      model.params().zero_grad();
      Graph<float> g;
      const auto loss = model.loss(g, batch, true, &dropout);
      const double value = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(value)) {
        log_info("language model training diverged in epoch ", epoch + 1);
        return r;
      }
      g.backward(loss);
      clip_global_norm(model.params(), s.max_norm);
      adam.step(model.params());
      loss_sum += value;
      ++updates;
    }
    const double ppl = model.perplexity(valid);
    r.valid_perplexity.push_back(ppl);
    if (ppl < r.best_perplexity) {
      r.best_perplexity = ppl;
      r.best = model.clone();
      bad = 0;
    } else {
      ++bad;
    }
    if (log) {
      *log << epoch + 1 << '\t' << loss_sum / static_cast<double>(updates) << '\t' << ppl << '\t'
           << r.best_perplexity << '\n';
    }
    if (bad >= s.patience) break;
  }
  return r;
}

}  // namespace knmt
