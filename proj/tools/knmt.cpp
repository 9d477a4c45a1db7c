// knmt: command-line front end. One subcommand per workflow; errors exit 1
// with a single diagnostic line.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "knmt/bleu.hpp"
#include "knmt/bpe.hpp"
#include "knmt/config.hpp"
#include "knmt/corpus.hpp"
#include "knmt/error.hpp"
#include "knmt/lm.hpp"
#include "knmt/log.hpp"
#include "knmt/nbest.hpp"
#include "knmt/reinflect.hpp"
#include "knmt/rerank.hpp"
#include "knmt/run_config.hpp"
#include "knmt/translate.hpp"

namespace {

using namespace knmt;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> beam, max_len, factor_k, jobs, k;
  std::optional<std::string> length_norm;
  bool greedy = false;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) cfg.merge_file(c.config);
  for (const auto& o : c.overrides) cfg.set_assignment(o);
  if (c.seed) cfg.seed = *c.seed;
  if (c.beam) cfg.set("beam", std::to_string(*c.beam));
  if (c.max_len) cfg.set("max_len", std::to_string(*c.max_len));
  if (c.factor_k) cfg.set("factor_k", std::to_string(*c.factor_k));
  if (c.jobs) cfg.set("jobs", std::to_string(*c.jobs));
  if (c.k) cfg.set("reinflect_k", std::to_string(*c.k));
  if (c.length_norm) cfg.set("length_norm", *c.length_norm);
  if (c.greedy) cfg.decode.greedy = true;
  cfg.validate();
  for (const auto& [key, value] : cfg.items()) log_info("config ", key, " = ", value);
  return cfg;
}

void add_config_flags(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "\"key = value\" configuration file");
  sub->add_option("--set", c.overrides, "override one configuration key (key=value)");
  sub->add_option("--seed", c.seed, "random seed");
}

void add_decode_flags(CLI::App* sub, Common& c) {
  sub->add_option("--beam", c.beam, "beam size");
  sub->add_option("--max-len", c.max_len, "decoder step budget (0: 2*source+10)");
  sub->add_option("--length-norm", c.length_norm, "rank by per-token log-prob (true|false)");
  sub->add_option("--factor-k", c.factor_k, "factor candidates per lemma (factored models)");
  sub->add_option("--jobs", c.jobs, "decoding threads");
  sub->add_flag("--greedy", c.greedy, "argmax decoding");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::pair<std::string, std::string> split_named(const std::string& s, const std::string& flag) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
    throw ConfigError(flag + ": expected name=path, got '" + s + "'");
  }
  return {s.substr(0, eq), s.substr(eq + 1)};
}

// Output to a file, or stdout for an empty path.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw Error("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  void close() {
    stream().flush();
    if (!stream()) throw Error("write failed");
  }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::vector<Sentence> maybe_merge(std::vector<Sentence> text, bool merge) {
  if (merge)
    for (auto& s : text) s = detokenize_bpe(s).words;
  return text;
}

struct CorpusFlags {
  std::string src, tgt, manifest, src_ext = "src", tgt_ext = "tgt";
  bool factored = false;
};

void add_corpus_flags(CLI::App* sub, CorpusFlags& f) {
  sub->add_option("--src", f.src, "training source text");
  sub->add_option("--tgt", f.tgt, "training target text (\"lemma|factors\" tokens with --factored)");
  sub->add_option("--manifest", f.manifest, "weighted corpus manifest (path<TAB>weight lines)");
  sub->add_option("--src-ext", f.src_ext, "source extension for manifest entries");
  sub->add_option("--tgt-ext", f.tgt_ext, "target extension for manifest entries");
  sub->add_flag("--factored", f.factored, "factored target side");
}

ParallelCorpus read_training(const CorpusFlags& f) {
  if (!f.manifest.empty()) {
    if (!f.src.empty() || !f.tgt.empty()) throw ConfigError("--manifest excludes --src/--tgt");
    return read_manifest(f.manifest, f.src_ext, f.tgt_ext, f.factored);
  }
  if (f.src.empty() || f.tgt.empty()) throw ConfigError("training data needs --src and --tgt, or --manifest");
  return f.factored ? read_factored(f.src, f.tgt) : read_parallel(f.src, f.tgt);
}

ParallelCorpus read_valid(const std::string& src, const std::string& tgt, bool factored) {
  return factored ? read_factored(src, tgt) : read_parallel(src, tgt);
}

std::vector<Seq2SeqModel<float>> load_models(const std::string& model, const std::string& ensemble) {
  std::vector<std::string> paths;
  if (!model.empty()) paths.push_back(model);
  for (auto& p : split_list(ensemble)) paths.push_back(p);
  if (paths.empty()) throw ConfigError("no model: give --model or --ensemble");
  std::vector<Seq2SeqModel<float>> out;
  for (const auto& p : paths) out.push_back(Seq2SeqModel<float>::load(p));
  return out;
}

std::vector<const Seq2SeqModel<float>*> pointers(const std::vector<Seq2SeqModel<float>>& models) {
  std::vector<const Seq2SeqModel<float>*> out;
  for (const auto& m : models) out.push_back(&m);
  return out;
}

std::vector<std::vector<int>> encode_all(const Vocabulary& v, const std::vector<Sentence>& text) {
  std::vector<std::vector<int>> out;
  for (const auto& s : text) out.push_back(v.encode(s, false));
  return out;
}

void report(const TrainResult& r) {
  log_info("updates ", r.updates, ", best validation BLEU ", format_real(r.best_bleu), ", stop: ",
           r.stop_reason);
  if (r.final_beam_bleu) log_info("beam re-score of the best checkpoint: ", format_real(*r.final_beam_bleu));
}

void finish_training(const TrainResult& r, const std::string& output) {
  report(r);
  r.best.save(output);
  if (r.diverged) throw NumericError("training diverged; best checkpoint written to " + output);
}

struct VocabFlags {
  std::string src, tgt, factors;
};

void add_vocab_flags(CLI::App* sub, VocabFlags& v) {
  sub->add_option("--src-vocab", v.src, "source vocabulary file");
  sub->add_option("--tgt-vocab", v.tgt, "target vocabulary file");
  sub->add_option("--factor-vocab", v.factors, "factor vocabulary file");
}

// ---- subcommands ---------------------------------------------------------

int cmd_train(const Common& common, const CorpusFlags& cf, const VocabFlags& vf,
              const std::string& valid_src, const std::string& valid_tgt,
              const std::string& output, const std::string& log_path) {
  RunConfig cfg = resolve(common);
  cfg.model.factored = cf.factored;
  ParallelCorpus corpus = filter_corpus(read_training(cf), cfg.filter_min_len, cfg.filter_max_len,
                                        cfg.filter_max_ratio);
  log_info("training pairs after filtering: ", corpus.size());
  const ParallelCorpus valid = read_valid(valid_src, valid_tgt, cf.factored);

  Vocabulary src_vocab, tgt_vocab;
  if (cfg.model.tying_mode == TyingMode::tied3) {
    if (!vf.src.empty() || !vf.tgt.empty()) {
      src_vocab = Vocabulary::load(vf.src.empty() ? vf.tgt : vf.src);
    } else {
      const std::vector<Sentence>* both[] = {&corpus.source, &corpus.target};
      src_vocab = Vocabulary::build(both);
    }
    tgt_vocab = src_vocab;
  } else {
    src_vocab = vf.src.empty() ? Vocabulary::build(corpus.source) : Vocabulary::load(vf.src);
    tgt_vocab = vf.tgt.empty() ? Vocabulary::build(corpus.target) : Vocabulary::load(vf.tgt);
  }
  std::optional<Vocabulary> factor_vocab;
  if (cf.factored) {
    factor_vocab = vf.factors.empty() ? Vocabulary::build(corpus.factors, false) : Vocabulary::load(vf.factors);
  }
  auto model = Seq2SeqModel<float>::build(cfg.model, src_vocab, tgt_vocab, factor_vocab, cfg.seed);
  log_info("parameters: ", model.count_params());
  Output log(log_path);
  const auto r = train(std::move(model), corpus, valid, cfg.schedule, cfg.seed, &log.stream());
  log.close();
  finish_training(r, output);
  return 0;
}

int cmd_finetune(const Common& common, const CorpusFlags& cf, const VocabFlags& vf,
                 const std::string& init, const std::string& valid_src,
                 const std::string& valid_tgt, const std::string& output,
                 const std::string& log_path) {
  const RunConfig cfg = resolve(common);
  const ParallelCorpus corpus = filter_corpus(read_training(cf), cfg.filter_min_len,
                                              cfg.filter_max_len, cfg.filter_max_ratio);
  const ParallelCorpus valid = read_valid(valid_src, valid_tgt, cf.factored);
  std::optional<Vocabulary> sv, tv;
  if (!vf.src.empty()) sv = Vocabulary::load(vf.src);
  if (!vf.tgt.empty()) tv = Vocabulary::load(vf.tgt);
  const FinetuneSpec spec{init, cfg.finetune_lr, cfg.finetune_validate_every};
  Output log(log_path);
  const auto r = finetune(spec, corpus, valid, cfg.schedule, cfg.seed, &log.stream(),
                          sv ? &*sv : nullptr, tv ? &*tv : nullptr);
  log.close();
  finish_training(r, output);
  return 0;
}

int cmd_translate(const Common& common, const std::string& model, const std::string& ensemble,
                  const std::string& input, const std::string& output,
                  const std::string& nbest_path, bool merge) {
  const RunConfig cfg = resolve(common);
  const auto models = load_models(model, ensemble);
  const auto members = pointers(models);
  const auto sources = read_sentences(input);
  const auto lists = decode_corpus<float>(members, encode_all(models.front().source_vocab(), sources), cfg.decode);
  Output out(output);
  std::vector<NBestEntry> entries;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    if (lists[i].empty()) throw Error("no hypothesis for sentence " + std::to_string(i + 1));
    out.stream() << join_words(hypothesis_text(models.front(), lists[i].front(), merge)) << '\n';
    for (const auto& h : lists[i]) {
      NBestEntry e;
      e.index = i;
      e.tokens = hypothesis_text(models.front(), h, merge);
      e.set_feature("nmt", h.logprob);
      e.total = h.score(cfg.decode.length_norm);
      entries.push_back(std::move(e));
    }
  }
  out.close();
  if (!nbest_path.empty()) {
    Output nb(nbest_path);
    write_nbest(nb.stream(), entries);
    nb.close();
  }
  return 0;
}

int cmd_backtranslate(const Common& common, const std::string& model, const std::string& ensemble,
                      const std::string& mono_path, const std::string& src, const std::string& tgt,
                      const std::string& out_src, const std::string& out_tgt, int original_weight) {
  const RunConfig cfg = resolve(common);
  if (original_weight < 1) throw ConfigError("--original-weight must be >= 1");
  const auto models = load_models(model, ensemble);
  if (models.front().factored()) throw ConfigError("backtranslate: the reverse model must be a word model");
  ParallelCorpus original = read_parallel(src, tgt, original_weight);
  const auto mono = read_sentences(mono_path);
  const std::size_t n = std::min(mono.size(), cfg.bt_limit.value_or(mono.size()));
  const std::vector<Sentence> head(mono.begin(), mono.begin() + static_cast<std::ptrdiff_t>(n));
  const auto lists = decode_corpus<float>(pointers(models), encode_all(models.front().source_vocab(), head), cfg.decode);
  std::size_t next = 0;
  const auto result = assemble_bt_corpus(original, mono, [&](const Sentence&) {
    const auto& list = lists.at(next++);
    return list.empty() ? Sentence{} : hypothesis_text(models.front(), list.front(), false);
  }, n);
  Output os(out_src), ot(out_tgt);
  for (std::size_t i = 0; i < result.corpus.size(); ++i) {
    for (int w = 0; w < result.corpus.weights[i]; ++w) {
      os.stream() << join_words(result.corpus.source[i]) << '\n';
      ot.stream() << join_words(result.corpus.target[i]) << '\n';
    }
  }
  os.close();
  ot.close();
  log_info("back-translated ", n - result.skipped, " of ", n, " monolingual sentences");
  return 0;
}

int cmd_bpe_learn(const Common& common, const std::vector<std::string>& inputs,
                  std::optional<std::size_t> merges, const std::string& output) {
  RunConfig cfg = resolve(common);
  if (merges) cfg.bpe_merges = *merges;
  std::vector<std::vector<Sentence>> corpora;
  for (const auto& p : inputs) corpora.push_back(read_sentences(p));
  std::vector<const std::vector<Sentence>*> ptrs;
  for (const auto& c : corpora) ptrs.push_back(&c);
  const auto model = SubwordModel::learn(ptrs, cfg.bpe_merges, cfg.bpe_min_frequency);
  log_info("learned ", model.merges().size(), " merges");
  model.save(output);
  return 0;
}

int cmd_bpe_apply(const Common& common, const std::string& bpe, const std::string& input,
                  const std::string& output, bool factored) {
  resolve(common);
  const auto model = SubwordModel::load(bpe);
  std::ifstream in(input);
  if (!in) throw LoadError("cannot read '" + input + "'");
  Output out(output);
  std::string line;
  while (std::getline(in, line)) {
    if (factored) {
      const auto streams = factored_bpe_apply(model, parse_factored(line));
      FactoredSentence fs;
      for (std::size_t i = 0; i < streams.lemmas.size(); ++i) fs.push_back({streams.lemmas[i], streams.factors[i]});
      out.stream() << format_factored(fs) << '\n';
    } else {
      out.stream() << join_words(model.apply(split_words(line))) << '\n';
    }
  }
  out.close();
  return 0;
}

int cmd_score_bleu(const std::string& hyp, const std::string& ref, bool smooth, bool merge) {
  const auto h = maybe_merge(read_sentences(hyp), merge);
  const auto r = maybe_merge(read_sentences(ref), merge);
  std::cout << bleu(h, r, smooth).format() << '\n';
  return 0;
}

int cmd_lm_train(const Common& common, const std::string& train_path, const std::string& valid_path,
                 const std::string& output, bool words) {
  const RunConfig cfg = resolve(common);
  const auto train_text = maybe_merge(read_sentences(train_path), words);
  const auto valid_text = maybe_merge(read_sentences(valid_path), words);
  if (train_text.empty()) throw ContractError("lm-train: empty training text");
  auto lm = LanguageModel<float>::build(cfg.lm, Vocabulary::build(train_text), cfg.seed);
  const auto r = lm_train(std::move(lm), train_text, valid_text, cfg.lm_schedule, cfg.seed, &std::cout);
  log_info("best validation perplexity ", format_real(r.best_perplexity));
  r.best.save(output);
  return 0;
}

int cmd_lm_score(const Common& common, const std::string& lm_path, const std::string& input,
                 const std::string& output, bool words) {
  resolve(common);
  const auto lm = LanguageModel<float>::load(lm_path);
  const auto text = maybe_merge(read_sentences(input), words);
  Output out(output);
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& s : text) {
    const double score = lm.score(s);
    total += score;
    tokens += s.size() + 1;
    out.stream() << format_real(score) << '\n';
  }
  out.close();
  if (tokens) log_info("perplexity ", format_real(std::exp(-total / static_cast<double>(tokens))));
  return 0;
}

struct ScorerFlags {
  std::vector<std::string> lms, nmts;
  std::string src;
  bool word_count = false;
  bool lm_words = false;
};

void add_scorer_flags(CLI::App* sub, ScorerFlags& f) {
  sub->add_option("--lm-feature", f.lms, "language-model feature name=path");
  sub->add_option("--nmt-feature", f.nmts, "translation-model feature name=path (needs --src)");
  sub->add_option("--src", f.src, "source sentences of the n-best lists");
  sub->add_flag("--word-count", f.word_count, "add the word-count feature \"wc\"");
  sub->add_flag("--lm-words", f.lm_words, "score language models on merged words instead of subwords");
}

// Owns the models behind the scorers.
struct Scorers {
  std::vector<std::unique_ptr<LanguageModel<float>>> lms;
  std::vector<std::unique_ptr<Seq2SeqModel<float>>> nmts;
  std::vector<Sentence> sources;
  std::vector<NamedScorer> list;
};

std::unique_ptr<Scorers> make_scorers(const ScorerFlags& f) {
  auto s = std::make_unique<Scorers>();
  for (const auto& spec : f.lms) {
    const auto [name, path] = split_named(spec, "--lm-feature");
    s->lms.push_back(std::make_unique<LanguageModel<float>>(LanguageModel<float>::load(path)));
    s->list.push_back(lm_scorer(name, *s->lms.back(), f.lm_words));
  }
  if (!f.nmts.empty()) {
    if (f.src.empty()) throw ConfigError("--nmt-feature needs --src");
    s->sources = read_sentences(f.src);
  }
  for (const auto& spec : f.nmts) {
    const auto [name, path] = split_named(spec, "--nmt-feature");
    s->nmts.push_back(std::make_unique<Seq2SeqModel<float>>(Seq2SeqModel<float>::load(path)));
    s->list.push_back(nmt_scorer(name, *s->nmts.back(), s->sources));
  }
  if (f.word_count) s->list.push_back(word_count_scorer());
  return s;
}

int cmd_rerank(const Common& common, const std::string& nbest_path, const std::string& weights_path,
               const ScorerFlags& sf, const std::string& output, const std::string& best_path,
               bool merge) {
  resolve(common);
  const auto weights = RerankWeights::load(weights_path);
  const auto scorers = make_scorers(sf);
  const auto entries = rescore_nbest(read_nbest(nbest_path), scorers->list, weights);
  Output out(output);
  write_nbest(out.stream(), entries);
  out.close();
  if (!best_path.empty()) {
    const auto lists = group_nbest(entries);
    Output best(best_path);
    for (const auto& list : lists) {
      const Sentence s = list.empty() ? Sentence{} : list.front().tokens;
      best.stream() << join_words(merge ? detokenize_bpe(s).words : s) << '\n';
    }
    best.close();
  }
  return 0;
}

int cmd_tune(const Common& common, const std::string& nbest_path, const std::string& ref_path,
             const ScorerFlags& sf, const std::string& features, const std::string& output,
             bool merge) {
  RunConfig cfg = resolve(common);
  const auto scorers = make_scorers(sf);
  auto entries = read_nbest(nbest_path);
  add_features(entries, scorers->list);
  if (merge)
    for (auto& e : entries) e.tokens = detokenize_bpe(e.tokens).words;
  const auto refs = maybe_merge(read_sentences(ref_path), merge);
  std::vector<std::string> names = split_list(features);
  if (names.empty() && !entries.empty())
    for (const auto& [name, value] : entries.front().features) names.push_back(name);
  cfg.tune.seed = cfg.seed;
  const auto r = tune_weights(group_nbest(entries, refs.size()), refs, names, cfg.tune);
  log_info("dev BLEU: uniform ", format_real(r.uniform_bleu), ", tuned ", format_real(r.bleu));
  r.weights.save(output);
  return 0;
}

int cmd_reinflect(const Common& common, const std::string& dict_path, const std::string& input,
                  const std::string& output, const std::string& nbest_path,
                  const std::string& build_words, const std::string& build_tagged,
                  const std::string& dict_out) {
  const RunConfig cfg = resolve(common);
  ReinflectionDictionary dict;
  if (!build_words.empty() || !build_tagged.empty()) {
    if (build_words.empty() || build_tagged.empty()) {
      throw ConfigError("dictionary building needs --build-words and --build-tagged");
    }
    dict = ReinflectionDictionary::from_tagged(read_sentences(build_words), read_sentences(build_tagged));
    log_info("dictionary entries: ", dict.size());
    if (!dict_out.empty()) dict.save(dict_out);
  } else if (!dict_path.empty()) {
    dict = ReinflectionDictionary::load(dict_path);
  } else {
    throw ConfigError("reinflect needs --dict or --build-words/--build-tagged");
  }
  if (input.empty()) return 0;

  std::ifstream in(input);
  if (!in) throw LoadError("cannot read '" + input + "'");
  Output out(output);
  std::optional<Output> nb;
  if (!nbest_path.empty()) nb.emplace(nbest_path);
  std::string line;
  std::size_t index = 0, misses = 0;
  while (std::getline(in, line)) {
    Sentence lemmas, factors;
    for (auto& tok : parse_factored(line)) {
      lemmas.push_back(std::move(tok.lemma));
      factors.push_back(std::move(tok.factors));
    }
    const auto r = reinflect(dict, lemmas, factors, cfg.reinflect_k, cfg.reinflect_cap);
    misses += r.misses;
    out.stream() << (r.sentences.empty() ? std::string() : join_words(r.sentences.front())) << '\n';
    if (nb) {
      for (std::size_t rank = 0; rank < r.sentences.size(); ++rank) {
        NBestEntry e;
        e.index = index;
        e.tokens = r.sentences[rank];
        e.set_feature("reinflect_rank", -static_cast<double>(rank));
        e.total = -static_cast<double>(rank);
        nb->stream() << format_nbest_line(e) << '\n';
      }
    }
    ++index;
  }
  out.close();
  if (nb) nb->close();
  log_info("reinflected ", index, " sentences; ", misses, " unknown (lemma, factors) pairs kept as lemmas");
  return 0;
}

Vocabulary sized_vocab(std::size_t size, bool reserved, const std::string& prefix) {
  Vocabulary v = reserved ? Vocabulary() : Vocabulary::plain();
  const std::size_t base = reserved ? Vocabulary::kNumReserved : 0;
  if (size < base + 1) throw ConfigError(prefix + "vocab_size must be at least " + std::to_string(base + 1));
  for (std::size_t i = base; i < size; ++i) v.add(prefix + std::to_string(i));
  return v;
}

int cmd_params(const Common& common, const std::string& model_path) {
  const RunConfig cfg = resolve(common);
  if (!model_path.empty()) {
    std::cout << Seq2SeqModel<float>::load(model_path).count_params() << '\n';
    return 0;
  }
  if (!cfg.src_vocab_size || !cfg.tgt_vocab_size) {
    throw ConfigError("params needs src_vocab_size and tgt_vocab_size (or --model)");
  }
  if (cfg.model.factored && !cfg.factor_vocab_size) throw ConfigError("params: factored model needs factor_vocab_size");
  const Vocabulary src = sized_vocab(cfg.src_vocab_size, true, "s");
  const Vocabulary tgt = cfg.model.tying_mode == TyingMode::tied3 && cfg.src_vocab_size == cfg.tgt_vocab_size
                             ? src
                             : sized_vocab(cfg.tgt_vocab_size, true, "t");
  std::optional<Vocabulary> factors;
  if (cfg.model.factored) factors = sized_vocab(cfg.factor_vocab_size, false, "f");
  const Seq2SeqModel<float> model(cfg.model, src, tgt, factors);
  std::cout << model.count_params() << '\n';
  return 0;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knmt: attentive encoder-decoder translation toolkit"};
  app.require_subcommand(1);
  Common common;

  CorpusFlags corpus;
  VocabFlags vocab;
  std::string valid_src, valid_tgt, output, log_path, init;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_config_flags(train_cmd, common);
  train_cmd->add_option("--jobs", common.jobs, "validation decoding threads");
  add_corpus_flags(train_cmd, corpus);
  add_vocab_flags(train_cmd, vocab);
  train_cmd->add_option("--valid-src", valid_src, "validation source")->required();
  train_cmd->add_option("--valid-tgt", valid_tgt, "validation target")->required();
  train_cmd->add_option("--output", output, "best checkpoint")->required();
  train_cmd->add_option("--log", log_path, "validation log (default stdout)");

  auto* finetune_cmd = app.add_subcommand("finetune", "continue training a checkpoint");
  add_config_flags(finetune_cmd, common);
  finetune_cmd->add_option("--jobs", common.jobs, "validation decoding threads");
  add_corpus_flags(finetune_cmd, corpus);
  add_vocab_flags(finetune_cmd, vocab);
  finetune_cmd->add_option("--init", init, "checkpoint to start from")->required();
  finetune_cmd->add_option("--valid-src", valid_src, "validation source")->required();
  finetune_cmd->add_option("--valid-tgt", valid_tgt, "validation target")->required();
  finetune_cmd->add_option("--output", output, "best checkpoint")->required();
  finetune_cmd->add_option("--log", log_path, "validation log (default stdout)");

  std::string model, ensemble, input, nbest;
  bool merge = false;
  auto* translate_cmd = app.add_subcommand("translate", "decode a source text");
  add_config_flags(translate_cmd, common);
  add_decode_flags(translate_cmd, common);
  translate_cmd->add_option("--model", model, "checkpoint");
  translate_cmd->add_option("--ensemble", ensemble, "comma-separated checkpoints");
  translate_cmd->add_option("--input", input, "source text")->required();
  translate_cmd->add_option("--output", output, "1-best output (default stdout)");
  translate_cmd->add_option("--nbest", nbest, "n-best output file");
  translate_cmd->add_flag("--merge-bpe", merge, "join \"@@\" subwords in the output");

  std::string mono, src, tgt, out_src, out_tgt;
  int original_weight = 1;
  auto* bt_cmd = app.add_subcommand("backtranslate", "build a back-translated corpus");
  add_config_flags(bt_cmd, common);
  add_decode_flags(bt_cmd, common);
  bt_cmd->add_option("--model", model, "reverse (target-to-source) checkpoint");
  bt_cmd->add_option("--ensemble", ensemble, "comma-separated reverse checkpoints");
  bt_cmd->add_option("--mono", mono, "target-side monolingual text")->required();
  bt_cmd->add_option("--src", src, "original source text")->required();
  bt_cmd->add_option("--tgt", tgt, "original target text")->required();
  bt_cmd->add_option("--out-src", out_src, "augmented source output")->required();
  bt_cmd->add_option("--out-tgt", out_tgt, "augmented target output")->required();
  bt_cmd->add_option("--original-weight", original_weight, "repetitions of the original corpus");

  std::vector<std::string> inputs;
  std::optional<std::size_t> merges;
  auto* bpe_learn_cmd = app.add_subcommand("bpe-learn", "learn joint BPE merges");
  add_config_flags(bpe_learn_cmd, common);
  bpe_learn_cmd->add_option("--input", inputs, "training texts (learned jointly)")->required();
  bpe_learn_cmd->add_option("--merges", merges, "number of merges");
  bpe_learn_cmd->add_option("--output", output, "BPE model file")->required();

  std::string bpe;
  bool factored = false;
  auto* bpe_apply_cmd = app.add_subcommand("bpe-apply", "segment a text with learned merges");
  add_config_flags(bpe_apply_cmd, common);
  bpe_apply_cmd->add_option("--bpe", bpe, "BPE model file")->required();
  bpe_apply_cmd->add_option("--input", input, "input text")->required();
  bpe_apply_cmd->add_option("--output", output, "segmented output (default stdout)");
  bpe_apply_cmd->add_flag("--factored", factored, "\"lemma|factors\" input; factors follow the lemma pieces");

  std::string hyp, ref;
  bool smooth = false;
  auto* bleu_cmd = app.add_subcommand("score-bleu", "corpus BLEU of a hypothesis file");
  bleu_cmd->add_option("--hyp", hyp, "hypotheses")->required();
  bleu_cmd->add_option("--ref", ref, "references")->required();
  bleu_cmd->add_flag("--smooth", smooth, "add-one smoothing on orders 2-4");
  bleu_cmd->add_flag("--merge-bpe", merge, "join \"@@\" subwords in both files first");

  std::string valid;
  bool words = false;
  auto* lm_train_cmd = app.add_subcommand("lm-train", "train a recurrent language model");
  add_config_flags(lm_train_cmd, common);
  lm_train_cmd->add_option("--train", input, "training text")->required();
  lm_train_cmd->add_option("--valid", valid, "validation text")->required();
  lm_train_cmd->add_option("--output", output, "language model file")->required();
  lm_train_cmd->add_flag("--words", words, "train on merged words instead of subwords");

  std::string lm_path;
  auto* lm_score_cmd = app.add_subcommand("lm-score", "sentence log-probabilities under a language model");
  add_config_flags(lm_score_cmd, common);
  lm_score_cmd->add_option("--lm", lm_path, "language model file")->required();
  lm_score_cmd->add_option("--input", input, "text")->required();
  lm_score_cmd->add_option("--output", output, "one score per line (default stdout)");
  lm_score_cmd->add_flag("--words", words, "merge subwords before scoring");

  ScorerFlags scorers;
  std::string weights, best;
  auto* rerank_cmd = app.add_subcommand("rerank", "rescore n-best lists with weighted features");
  add_config_flags(rerank_cmd, common);
  rerank_cmd->add_option("--nbest", nbest, "n-best input")->required();
  rerank_cmd->add_option("--weights", weights, "weights file (name = value)")->required();
  rerank_cmd->add_option("--output", output, "reranked n-best output (default stdout)");
  rerank_cmd->add_option("--best", best, "1-best text output");
  rerank_cmd->add_flag("--merge-bpe", merge, "join \"@@\" subwords in the 1-best output");
  add_scorer_flags(rerank_cmd, scorers);

  std::string features;
  auto* tune_cmd = app.add_subcommand("tune-weights", "fit rerank weights to dev BLEU");
  add_config_flags(tune_cmd, common);
  tune_cmd->add_option("--nbest", nbest, "dev n-best lists")->required();
  tune_cmd->add_option("--ref", ref, "dev references")->required();
  tune_cmd->add_option("--features", features, "comma-separated features to weight (default: all)");
  tune_cmd->add_option("--output", output, "weights file")->required();
  tune_cmd->add_flag("--merge-bpe", merge, "score BLEU on merged words");
  add_scorer_flags(tune_cmd, scorers);

  std::string dict, build_words, build_tagged, dict_out;
  auto* reinflect_cmd = app.add_subcommand("reinflect", "map lemma|factors tokens to surface words");
  add_config_flags(reinflect_cmd, common);
  reinflect_cmd->add_option("--k", common.k, "candidates per position");
  reinflect_cmd->add_option("--dict", dict, "dictionary file (lemma<TAB>factors<TAB>word<TAB>count)");
  reinflect_cmd->add_option("--input", input, "factored text");
  reinflect_cmd->add_option("--output", output, "best surface sentence per line (default stdout)");
  reinflect_cmd->add_option("--nbest", nbest, "all candidate sentences in n-best format");
  reinflect_cmd->add_option("--build-words", build_words, "surface text for building a dictionary");
  reinflect_cmd->add_option("--build-tagged", build_tagged, "aligned lemma|factors text");
  reinflect_cmd->add_option("--dict-out", dict_out, "write the built dictionary");

  auto* params_cmd = app.add_subcommand("params", "parameter count of a configuration or checkpoint");
  add_config_flags(params_cmd, common);
  params_cmd->add_option("--model", model, "checkpoint");

  try {
    app.parse(argc, argv);
    if (train_cmd->parsed()) return cmd_train(common, corpus, vocab, valid_src, valid_tgt, output, log_path);
    if (finetune_cmd->parsed())
      return cmd_finetune(common, corpus, vocab, init, valid_src, valid_tgt, output, log_path);
    if (translate_cmd->parsed()) return cmd_translate(common, model, ensemble, input, output, nbest, merge);
    if (bt_cmd->parsed())
      return cmd_backtranslate(common, model, ensemble, mono, src, tgt, out_src, out_tgt, original_weight);
    if (bpe_learn_cmd->parsed()) return cmd_bpe_learn(common, inputs, merges, output);
    if (bpe_apply_cmd->parsed()) return cmd_bpe_apply(common, bpe, input, output, factored);
    if (bleu_cmd->parsed()) return cmd_score_bleu(hyp, ref, smooth, merge);
    if (lm_train_cmd->parsed()) return cmd_lm_train(common, input, valid, output, words);
    if (lm_score_cmd->parsed()) return cmd_lm_score(common, lm_path, input, output, words);
    if (rerank_cmd->parsed()) return cmd_rerank(common, nbest, weights, scorers, output, best, merge);
    if (tune_cmd->parsed()) return cmd_tune(common, nbest, ref, scorers, features, output, merge);
    if (reinflect_cmd->parsed())
      return cmd_reinflect(common, dict, input, output, nbest, build_words, build_tagged, dict_out);
    if (params_cmd->parsed()) return cmd_params(common, model);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "knmt: error: " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "knmt: error: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 1;
}
