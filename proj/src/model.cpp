#include "knmt/model.hpp"

#include <fstream>
#include <sstream>

#include "knmt/config.hpp"
#include "knmt/error.hpp"

namespace knmt {

std::string to_string(H2oMode m) { return m == H2oMode::separate ? "separate" : "shared"; }

H2oMode parse_h2o_mode(const std::string& s) {
  if (s == "shared") return H2oMode::shared;
  if (s == "separate") return H2oMode::separate;
  throw ConfigError("h2o_mode: expected shared|separate, got '" + s + "'");
}


bool ModelConfig::set(const std::string& key, const std::string& value) {
  if (key == "emb_dim") emb_dim = parse_count(key, value, false);
  else if (key == "enc_hidden") enc_hidden = parse_count(key, value, false);
  else if (key == "dec_hidden") dec_hidden = parse_count(key, value, false);
  else if (key == "alignment_dim") alignment_dim = parse_count(key, value, true);
  else if (key == "tying_mode") tying_mode = parse_tying_mode(value);
  else if (key == "init_mode") init_mode = parse_init_mode(value);
  else if (key == "output_mode") output_mode = parse_output_mode(value);
  else if (key == "factored") factored = parse_bool(key, value);
  else if (key == "h2o_mode") h2o_mode = parse_h2o_mode(value);
  else if (key == "dropout_p") dropout_p = parse_real(key, value);
  else return false;
  return true;
}

std::vector<std::pair<std::string, std::string>> ModelConfig::items() const {
  return {{"emb_dim", std::to_string(emb_dim)},
          {"enc_hidden", std::to_string(enc_hidden)},
          {"dec_hidden", std::to_string(dec_hidden)},
          {"alignment_dim", std::to_string(alignment_dim)},
          {"tying_mode", to_string(tying_mode)},
          {"init_mode", to_string(init_mode)},
          {"output_mode", to_string(output_mode)},
          {"factored", factored ? "true" : "false"},
          {"h2o_mode", to_string(h2o_mode)},
          {"dropout_p", format_real(dropout_p)}};
}

void ModelConfig::validate() const {
  if (!emb_dim || !enc_hidden || !dec_hidden) {
    throw ConfigError("emb_dim, enc_hidden and dec_hidden must be positive");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw ConfigError("dropout_p: must be in [0, 1), got " + format_real(dropout_p));
  }
}

std::size_t param_count_formula(const ModelConfig& c, std::size_t vs, std::size_t vt,
                                std::size_t vf) {
  const std::size_t E = c.emb_dim, H = c.enc_hidden, D = c.dec_hidden;
  const std::size_t C = 2 * H, A = c.effective_alignment_dim();
  std::size_t n = 0;
  switch (c.tying_mode) {
    case TyingMode::none: n += vs * E + 2 * vt * E; break;
    case TyingMode::tied2: n += vs * E + vt * E; break;
    case TyingMode::tied3: n += vt * E; break;
  }
  const auto gru = [](std::size_t in, std::size_t hid) { return 3 * (in * hid + hid * hid + hid); };
  n += 2 * (gru(E, H) + 3 * 2 * H);  // two directions, three layer norms each
  if (c.init_mode == InitMode::mean_state) n += C * D + D;
  n += gru(E, D) + gru(C, D);
  n += D * A + C * A + 2 * A;
  const std::size_t o_layer = D * E + (c.output_mode == OutputMode::conditional ? C * E : 0) + E;
  n += o_layer + vt;
  if (c.factored) {
    n += vf * E + vf;
    if (c.h2o_mode == H2oMode::separate) n += o_layer;
  }
  return n;
}

template <typename Real>
Seq2SeqModel<Real>::Seq2SeqModel(ModelConfig config, Vocabulary source, Vocabulary target,
                                 std::optional<Vocabulary> factors)
    : config_(std::move(config)),
      src_vocab_(std::move(source)),
      tgt_vocab_(std::move(target)),
      factor_vocab_(std::move(factors)),
      params_(std::make_unique<ParameterSet<Real>>()),
      layers_(std::make_unique<Layers>()) {
  config_.validate();
  if (!src_vocab_.reserved() || !tgt_vocab_.reserved()) {
    throw ConfigError("source and target vocabularies need reserved entries");
  }
  if (config_.tying_mode == TyingMode::tied3 && !(src_vocab_ == tgt_vocab_)) {
    throw ConfigError("tying_mode tied3 requires one combined source/target vocabulary");
  }
  if (config_.factored && (!factor_vocab_ || factor_vocab_->size() == 0)) {
    throw ConfigError("factored model requires a non-empty factor vocabulary");
  }
  if (!config_.factored) factor_vocab_.reset();

  const std::size_t E = config_.emb_dim, H = config_.enc_hidden, D = config_.dec_hidden;
  const std::size_t C = config_.annotation_dim(), A = config_.effective_alignment_dim();
  auto& ps = *params_;
  auto& L = *layers_;
  L.emb = EmbeddingTable<Real>(ps, src_vocab_.size(), tgt_vocab_.size(), E, config_.tying_mode);
  L.enc_fwd = GruCell<Real>(ps, "enc.fwd", E, H, true);
  L.enc_bwd = GruCell<Real>(ps, "enc.bwd", E, H, true);
  L.dec = CgruDecoder<Real>(ps, "dec", E, C, D, A, config_.init_mode);
  L.out = OutputHead<Real>(ps, "out", D, C, E, L.emb.output_table(), "out.bias",
                           config_.output_mode);
  // Factor parameters come last so that the shared part of a factored model
  // initializes exactly like the corresponding word model.
  if (config_.factored) {
    const std::size_t vf = factor_vocab_->size();
    L.W_f = &ps.add("out.W_f", {vf, E});
    if (config_.h2o_mode == H2oMode::separate) {
      L.out_factor.emplace(ps, "out_f", D, C, E, *L.W_f, "out.bias_f", config_.output_mode);
    } else {
      L.bias_f = &ps.add("out.bias_f", {vf});
    }
  }
}

template <typename Real>
Seq2SeqModel<Real> Seq2SeqModel<Real>::build(ModelConfig config, Vocabulary source,
                                             Vocabulary target, std::optional<Vocabulary> factors,
                                             std::uint64_t seed) {
  Seq2SeqModel m(std::move(config), std::move(source), std::move(target), std::move(factors));
  Rng rng = Rng::named(seed, "init");
  m.params_->xavier_init(rng);
  return m;
}

template <typename Real>
Seq2SeqModel<Real> Seq2SeqModel<Real>::clone() const {
  Seq2SeqModel m(config_, src_vocab_, tgt_vocab_, factor_vocab_);
  m.params_->copy_values_from(*params_);
  return m;
}

template <typename Real>
TrainBatch Seq2SeqModel<Real>::make_batch(const std::vector<std::vector<int>>& src,
                                          const std::vector<std::vector<int>>& tgt,
                                          const std::vector<std::vector<int>>& factors) const {
  if (src.size() != tgt.size() || src.empty()) {
    throw ContractError("make_batch: need equally many (>0) source and target sentences");
  }
  if (config_.factored != !factors.empty()) {
    throw ContractError(config_.factored ? "make_batch: factored model needs factor ids"
                                         : "make_batch: factor ids given to a word model");
  }
  TrainBatch b;
  b.size = src.size();
  std::size_t ts = 0, tt = 0;
  for (std::size_t i = 0; i < b.size; ++i) {
    if (config_.factored && factors[i].size() != tgt[i].size()) {
      throw ContractError("make_batch: sentence " + std::to_string(i) + " has " +
                          std::to_string(tgt[i].size()) + " lemmas but " +
                          std::to_string(factors[i].size()) + " factors");
    }
    b.src_len.push_back(src[i].size() + 1);
    b.tgt_len.push_back(tgt[i].size() + 1);
    ts = std::max(ts, src[i].size() + 1);
    tt = std::max(tt, tgt[i].size() + 1);
  }
  auto matrix = [&](std::size_t t) {
    return std::vector<std::vector<int>>(t, std::vector<int>(b.size, Vocabulary::kPad));
  };
  b.src = matrix(ts);
  b.tgt_in = matrix(tt);
  b.tgt_out = matrix(tt);
  if (config_.factored) b.factor_out = matrix(tt);
  for (std::size_t i = 0; i < b.size; ++i) {
    for (std::size_t t = 0; t < src[i].size(); ++t) b.src[t][i] = src[i][t];
    b.src[src[i].size()][i] = Vocabulary::kEos;
    b.tgt_in[0][i] = Vocabulary::kBos;
    for (std::size_t t = 0; t < tgt[i].size(); ++t) {
      b.tgt_in[t + 1][i] = tgt[i][t];
      b.tgt_out[t][i] = tgt[i][t];
      if (config_.factored) b.factor_out[t][i] = factors[i][t];
    }
    b.tgt_out[tgt[i].size()][i] = Vocabulary::kEos;
  }
  return b;
}

template <typename Real>
typename Seq2SeqModel<Real>::Loss Seq2SeqModel<Real>::loss(Graph<Real>& g,
                                                           const TrainBatch& batch,
                                                           bool training, Rng* rng) const {
  const auto& L = *layers_;
  const std::size_t B = batch.size, Ts = batch.src.size(), Tt = batch.tgt_in.size();
  const double p = training ? config_.dropout_p : 0.0;
  Rng unused(0);
  if (p > 0 && !rng) throw ContractError("loss: training with dropout needs a generator");
  Rng& drop = rng ? *rng : unused;

  bool padded = false;
  std::vector<Expr<Real>> masks, embs;
  for (std::size_t t = 0; t < Ts; ++t) {
    std::vector<Real> m(B);
    for (std::size_t b = 0; b < B; ++b) {
      m[b] = t < batch.src_len[b] ? Real(1) : Real(0);
      padded |= m[b] == Real(0);
    }
    masks.push_back(g.constant({B, 1}, std::move(m)));
    embs.push_back(dropout(L.emb.embed(g, batch.src[t], EmbedRole::source), p, training, drop));
  }
  const Masks<Real> mask_span = padded ? Masks<Real>(masks) : Masks<Real>();
  auto ann = encode<Real>(g, embs, L.enc_fwd, L.enc_bwd, mask_span);
  for (auto& a : ann) a = dropout(a, p, training, drop);
  const auto projected = L.dec.attention().project(g, ann);
  std::optional<Expr<Real>> penalty;
  if (padded) {
    std::vector<Real> pen(B * Ts, Real(0));
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = batch.src_len[b]; t < Ts; ++t) pen[b * Ts + t] = Real(-1e9);
    penalty = g.constant({B, Ts}, std::move(pen));
  }

  Expr<Real> h = L.dec.initial_state(g, ann, mask_span);
  std::vector<Expr<Real>> lemma_terms, factor_terms;
  for (std::size_t t = 0; t < Tt; ++t) {
    const Expr<Real> y = L.emb.embed(g, batch.tgt_in[t], EmbedRole::feedback);
    const auto r = L.dec.step(g, y, h, ann, projected, penalty);
    h = r.hidden;
    const Expr<Real> o = dropout(L.out.hidden(g, h, y, r.context), p, training, drop);
    const Expr<Real> lp = log_softmax(L.out.logits(g, o));

    std::vector<Real> w(B, Real(0)), wf(B, Real(0));
    for (std::size_t b = 0; b < B; ++b) {
      const Real scale = Real(-1) / static_cast<Real>(batch.tgt_len[b] * B);
      if (t < batch.tgt_len[b]) w[b] = scale;
      if (t + 1 < batch.tgt_len[b]) wf[b] = scale;
    }
    lemma_terms.push_back(sum(g.pick(lp, batch.tgt_out[t]) * g.constant({B, 1}, std::move(w))));

    if (config_.factored && t + 1 < Tt) {
      Expr<Real> logits_f;
      if (L.out_factor) {
        const Expr<Real> of = dropout(L.out_factor->hidden(g, h, y, r.context), p, training, drop);
        logits_f = L.out_factor->logits(g, of);
      } else {
        logits_f = add_bias(matmul_nt(o, g.parameter(*L.W_f)), g.parameter(*L.bias_f));
      }
      factor_terms.push_back(
          sum(g.pick(log_softmax(logits_f), batch.factor_out[t]) * g.constant({B, 1}, std::move(wf))));
    }
  }
  auto total_of = [](const std::vector<Expr<Real>>& terms) {
    Expr<Real> acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i];
    return acc;
  };
  Loss out{total_of(lemma_terms), total_of(lemma_terms), std::nullopt};
  if (config_.factored) {
    if (factor_terms.empty()) {
      out.factor = g.constant({1}, {Real(0)});
    } else {
      out.factor = total_of(factor_terms);
    }
    out.total = out.lemma + *out.factor;
  }
  return out;
}

template <typename Real>
double Seq2SeqModel<Real>::forward_loss(const std::vector<int>& src, const std::vector<int>& tgt,
                                        const std::vector<int>& factors) const {
  if (src.empty() || tgt.empty()) throw ContractError("forward_loss: empty sentence");
  Graph<Real> g(GraphOptions{false, false});
  const auto batch = config_.factored ? make_batch({src}, {tgt}, {factors}) : make_batch({src}, {tgt});
  return static_cast<double>(loss(g, batch, false, nullptr).total.value()[0]);
}

template <typename Real>
EncodedSource<Real> Seq2SeqModel<Real>::encode_source(std::span<const int> src_ids) const {
  const auto& L = *layers_;
  Graph<Real> g(GraphOptions{false, false});
  std::vector<Expr<Real>> embs;
  for (const int id : src_ids) {
    const int one[] = {id};
    embs.push_back(L.emb.embed(g, one, EmbedRole::source));
  }
  const int eos[] = {Vocabulary::kEos};
  embs.push_back(L.emb.embed(g, eos, EmbedRole::source));
  const auto ann = encode<Real>(g, embs, L.enc_fwd, L.enc_bwd);
  const auto proj = L.dec.attention().project(g, ann);
  EncodedSource<Real> out;
  for (std::size_t t = 0; t < ann.size(); ++t) {
    out.annotations.push_back(g.tensor(ann[t]));
    out.projected.push_back(g.tensor(proj[t]));
  }
  out.initial_state = g.tensor(L.dec.initial_state(g, ann));
  return out;
}

namespace {

template <typename Real>
Expr<Real> tile_rows(Graph<Real>& g, const Tensor<Real>& row, std::size_t k) {
  std::vector<Real> data;
  data.reserve(row.data.size() * k);
  for (std::size_t i = 0; i < k; ++i) data.insert(data.end(), row.data.begin(), row.data.end());
  return g.constant({k, row.data.size()}, std::move(data));
}

}  // namespace

template <typename Real>
StepOutput<Real> Seq2SeqModel<Real>::step(const EncodedSource<Real>& src,
                                          const Tensor<Real>& hidden,
                                          std::span<const int> prev) const {
  const auto& L = *layers_;
  const std::size_t K = prev.size();
  if (K == 0 || hidden.rows() != K) {
    throw ContractError("step: " + std::to_string(K) + " previous ids for hidden state " +
                        shape_str(hidden.shape));
  }
  Graph<Real> g(GraphOptions{false, false});
  std::vector<Expr<Real>> ann, proj;
  for (std::size_t t = 0; t < src.annotations.size(); ++t) {
    ann.push_back(tile_rows(g, src.annotations[t], K));
    proj.push_back(tile_rows(g, src.projected[t], K));
  }
  const Expr<Real> h_prev = g.constant(hidden);
  const Expr<Real> y = L.emb.embed(g, prev, EmbedRole::feedback);
  const auto r = L.dec.step(g, y, h_prev, ann, proj);
  const Expr<Real> o = L.out.hidden(g, r.hidden, y, r.context);
  StepOutput<Real> out;
  out.hidden = g.tensor(r.hidden);
  out.probs = g.tensor(softmax(L.out.logits(g, o)));
  out.attention = g.tensor(r.weights);
  if (config_.factored) {
    Expr<Real> logits_f;
    if (L.out_factor) {
      logits_f = L.out_factor->logits(g, L.out_factor->hidden(g, r.hidden, y, r.context));
    } else {
      logits_f = add_bias(matmul_nt(o, g.parameter(*L.W_f)), g.parameter(*L.bias_f));
    }
    out.factor_probs = g.tensor(softmax(logits_f));
  }
  return out;
}

// Checkpoint layout:
//   KNMT1
//   config key=value ...
//   vocab source / vocab target [/ vocab factor], each followed by the
//   vocabulary's own text block
//   tensors N, then N lines "tensor name f32|f64 rank d0 d1 ..."
//   aliases M, then M lines "alias name target"
//   data
//   raw little-endian payloads in tensor order

namespace {

constexpr const char* kMagic = "KNMT1";

std::string expect_line(std::istream& in, const std::string& field) {
  std::string line;
  if (!std::getline(in, line)) throw LoadError("checkpoint: truncated before " + field);
  return line;
}

std::vector<std::string> expect_words(std::istream& in, const std::string& field,
                                      const std::string& keyword) {
  auto words = split_words(expect_line(in, field));
  if (words.empty() || words[0] != keyword) {
    throw LoadError("checkpoint: expected '" + keyword + "' line for " + field);
  }
  return words;
}

}  // namespace

template <typename Real>
void Seq2SeqModel<Real>::save(std::ostream& out) const {
  out << kMagic << "\nconfig";
  for (const auto& [k, v] : config_.items()) out << ' ' << k << '=' << v;
  out << "\nvocab source\n";
  src_vocab_.save(out);
  out << "vocab target\n";
  tgt_vocab_.save(out);
  if (factor_vocab_) {
    out << "vocab factor\n";
    factor_vocab_->save(out);
  }
  write_parameter_block(out, *params_);
  if (!out) throw Error("checkpoint: write failed");
}

template <typename Real>
void Seq2SeqModel<Real>::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  save(out);
}

template <typename Real>
Seq2SeqModel<Real> Seq2SeqModel<Real>::load(std::istream& in) {
  const std::string magic = expect_line(in, "magic");
  if (magic != kMagic) {
    if (magic.rfind("KNMT", 0) == 0) throw LoadError("checkpoint: unsupported version '" + magic + "'");
    throw LoadError("checkpoint: bad magic (expected KNMT1)");
  }
  ModelConfig config;
  const auto cfg = expect_words(in, "config", "config");
  for (std::size_t i = 1; i < cfg.size(); ++i) {
    const auto eq = cfg[i].find('=');
    if (eq == std::string::npos) throw LoadError("checkpoint: malformed config entry '" + cfg[i] + "'");
    const std::string key = cfg[i].substr(0, eq);
    try {
      if (!config.set(key, cfg[i].substr(eq + 1))) {
        throw LoadError("checkpoint: unknown config key '" + key + "'");
      }
    } catch (const ConfigError& e) {
      throw LoadError(std::string("checkpoint: config ") + e.what());
    }
  }
  auto read_vocab = [&](const std::string& role) {
    const auto w = expect_words(in, "vocab " + role, "vocab");
    if (w.size() != 2 || w[1] != role) throw LoadError("checkpoint: expected vocab " + role);
    try {
      return Vocabulary::load(in);
    } catch (const LoadError& e) {
      throw LoadError("checkpoint: vocab " + role + ": " + e.what());
    }
  };
  Vocabulary src = read_vocab("source");
  Vocabulary tgt = read_vocab("target");
  std::optional<Vocabulary> factors;
  if (config.factored) factors = read_vocab("factor");

  std::optional<Seq2SeqModel> built;
  try {
    built.emplace(config, std::move(src), std::move(tgt), std::move(factors));
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint: config ") + e.what());
  }
  Seq2SeqModel& m = *built;

  read_parameter_block(in, *m.params_, "checkpoint");
  return std::move(m);
}

template <typename Real>
Seq2SeqModel<Real> Seq2SeqModel<Real>::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read checkpoint '" + path + "'");
  return load(in);
}

template <typename Real>
std::uint64_t parameter_hash(const Seq2SeqModel<Real>& model) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& name : model.params().names()) {
    const auto& data = model.params().get(name).data;
    const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
    for (std::size_t i = 0; i < data.size() * sizeof(Real); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

template class Seq2SeqModel<float>;
template class Seq2SeqModel<double>;
template std::uint64_t parameter_hash<float>(const Seq2SeqModel<float>&);
template std::uint64_t parameter_hash<double>(const Seq2SeqModel<double>&);

}  // namespace knmt
