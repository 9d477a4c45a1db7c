// Acceptance runner: one pass/fail line per criterion.
//
// usage: acceptance [N ...]   (criterion numbers; all when omitted)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bleu_oracle.hpp"
#include "bpe_oracles.hpp"
#include "knmt/bleu.hpp"
#include "knmt/bpe.hpp"
#include "knmt/corpus.hpp"
#include "knmt/reinflect.hpp"
#include "knmt/rerank.hpp"
#include "knmt/search.hpp"
#include "knmt/trainer.hpp"
#include "knmt/translate.hpp"
#include "layer_checks.hpp"
#include "planted_dev.hpp"
#include "search_oracles.hpp"
#include "support.hpp"
#include "toy_tasks.hpp"

using namespace knmt;
using namespace knmt::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects failed sub-checks; the first few are reported.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (++failures_ <= 3) failed_ += (failed_.empty() ? "" : "; ") + what;
  }
  bool ok() const { return failures_ == 0; }
  Outcome outcome(std::string detail) const {
    if (failures_) detail += " | " + std::to_string(failures_) + " failed: " + failed_;
    return {ok(), std::move(detail)};
  }

 private:
  std::size_t failures_ = 0;
  std::string failed_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

TrainSchedule toy_schedule() {
  TrainSchedule s;
  s.lr = 4e-3;
  s.batch_size = 16;
  s.final_beam = 0;
  return s;
}

ParallelCorpus segment(const SubwordModel& bpe, const ParallelCorpus& c) {
  ParallelCorpus out;
  for (std::size_t i = 0; i < c.size(); ++i) out.add(bpe.apply(c.source[i]), bpe.apply(c.target[i]));
  return out;
}

ParallelCorpus flip(const ParallelCorpus& c) {
  ParallelCorpus out;
  for (std::size_t i = 0; i < c.size(); ++i) out.add(c.target[i], c.source[i]);
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome gradient_integrity() {
  Stopwatch clock;
  Checks checks;
  double worst = 0;
  const auto layers = layer_grad_checks();
  for (const auto& c : layers) {
    worst = std::max(worst, c.report.worst);
    checks.expect(c.report.passed, c.name);
  }
  std::size_t graphs = 0;
  for (auto tying : {TyingMode::none, TyingMode::tied2, TyingMode::tied3})
    for (auto init : {InitMode::mean_state, InitMode::zero})
      for (auto output : {OutputMode::conditional, OutputMode::simple}) {
        auto cfg = tiny_config();
        cfg.tying_mode = tying;
        cfg.init_mode = init;
        cfg.output_mode = output;
        const auto r = model_grad_check(cfg, 31);
        worst = std::max(worst, r.worst);
        checks.expect(r.passed, to_string(tying) + "/" + to_string(init) + "/" + to_string(output));
        ++graphs;
      }
  const double t = clock.seconds();
  checks.expect(t < 120, "runtime");
  return checks.outcome(std::to_string(layers.size()) + " layer checks, " + std::to_string(graphs) +
                        " full-graph configurations, worst rel. err " + fmt("%.2e", worst) +
                        " (tol 1e-4), " + fmt("%.1f s", t));
}

Outcome copy_convergence() {
  Stopwatch clock;
  const auto corpus = copy_corpus(200, 20, 42);
  const Vocabulary v = Vocabulary::build(corpus.source);
  auto cfg = tiny_config(8, 16);
  auto model = Seq2SeqModel<float>::build(cfg, v, v, std::nullopt, 42);
  auto s = toy_schedule();
  s.max_epochs = 300;
  s.validate_fraction = 1.0;
  s.patience = 20;
  s.bleu_on_words = false;
  const auto r = train(std::move(model), corpus, corpus, s, 42);
  const double train_bleu = validation_bleu(r.best, corpus, 1, false, false).bleu;
  double reached = -1;
  for (const auto& rec : r.log)
    if (rec.bleu >= 99.0) {
      reached = rec.epoch;
      break;
    }
  const double t = clock.seconds();
  Checks checks;
  checks.expect(train_bleu >= 99.0, "training BLEU below 99");
  checks.expect(reached > 0 && reached <= 300.0, "not reached within 300 epochs");
  checks.expect(t < 300, "runtime");
  return checks.outcome(std::to_string(v.size()) + " vocabulary entries (" +
                        std::to_string(v.size() - Vocabulary::kNumReserved) +
                        " words), greedy training BLEU " + fmt("%.2f", train_bleu) +
                        ", first >= 99 at epoch " + fmt("%.0f", reached) + ", " + fmt("%.1f s", t));
}

Outcome reverse_generalization() {
  Stopwatch clock;
  const auto lexicon = toy_lexicon(40, 7);
  const auto all = reversal_corpus(1200, lexicon, 7);
  ParallelCorpus train_set, dev, test;
  for (std::size_t i = 0; i < all.size(); ++i)
    (i < 1000 ? train_set : i < 1100 ? dev : test).add(all.source[i], all.target[i]);
  std::vector<Sentence> joint = train_set.source;
  joint.insert(joint.end(), train_set.target.begin(), train_set.target.end());
  const auto bpe = SubwordModel::learn(joint, 30);
  const auto train_bpe = segment(bpe, train_set);
  const Vocabulary v = Vocabulary::build(train_bpe.source);
  auto model = Seq2SeqModel<float>::build(tiny_config(16, 32), v, v, std::nullopt, 42);
  auto s = toy_schedule();
  s.max_epochs = 60;
  s.validate_fraction = 1.0;
  s.patience = 10;
  const auto r = train(std::move(model), train_bpe, segment(bpe, dev), s, 42);
  // Scored on words: pieces are joined on both sides.
  const double held_out = validation_bleu(r.best, segment(bpe, test), 1, true, false).bleu;
  const double t = clock.seconds();
  Checks checks;
  checks.expect(held_out >= 90.0, "held-out BLEU below 90");
  checks.expect(t < 600, "runtime");
  return checks.outcome(std::to_string(bpe.merges().size()) + " merges, " +
                        std::to_string(r.updates) + " updates, held-out BLEU " +
                        fmt("%.2f", held_out) + " on 100 sentences, " + fmt("%.1f s", t));
}

Outcome beam_vs_exhaustive() {
  Checks checks;
  std::size_t forced = 0, visited = 0;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed + 10000);
    // At most 5 emittable symbols (eos, unk and up to three words), so a
    // 625-wide beam never prunes at max_len 4.
    const std::size_t n_words = 1 + rng.below(3);
    const auto model = tiny_search_model(seed + 7000, n_words);
    const auto src = random_ids(rng, n_words + Vocabulary::kNumReserved, 1 + rng.below(4));
    SearchOptions opt;
    opt.beam = 625;
    opt.max_len = 1 + rng.below(4);
    opt.length_norm = false;
    const auto nbest = beam_decode(model, src, opt);
    const auto oracle = exhaustive_search(model, src, opt.max_len);
    visited += oracle.visited;
    if (nbest.empty()) {
      checks.expect(false, "empty n-best at seed " + std::to_string(seed));
      continue;
    }
    forced += nbest[0].forced;
    const double diff = std::abs(nbest[0].logprob - oracle.logprob);
    worst = std::max(worst, diff);
    checks.expect(nbest[0].tokens == oracle.tokens, "tokens differ at seed " + std::to_string(seed));
    checks.expect(diff < 1e-9, "score differs at seed " + std::to_string(seed));
  }
  return checks.outcome("200 models, " + std::to_string(visited) + " sequences enumerated, " +
                        std::to_string(forced) + " best hypotheses force-terminated, max |Δ| " +
                        fmt("%.1e", worst));
}

Outcome ensemble_identity() {
  const auto corpus = copy_corpus(120, 12, 5);
  const Vocabulary v = Vocabulary::build(corpus.source);
  auto s = toy_schedule();
  s.max_epochs = 3;
  s.bleu_on_words = false;
  const auto trained =
      train(Seq2SeqModel<float>::build(tiny_config(8, 16), v, v, std::nullopt, 5), corpus, corpus, s, 5);
  const auto path = fs::temp_directory_path() / "knmt_acceptance_ensemble.ckpt";
  trained.best.save(path.string());
  const auto single = Seq2SeqModel<float>::load(path.string());
  std::vector<Seq2SeqModel<float>> copies;
  for (int i = 0; i < 3; ++i) copies.push_back(Seq2SeqModel<float>::load(path.string()));
  fs::remove(path);

  const auto fresh = copy_corpus(100, 12, 6);
  std::vector<std::vector<int>> sources;
  for (const auto& s_ : fresh.source) sources.push_back(v.encode(s_, false));
  DecodeConfig dc;
  const Seq2SeqModel<float>* one[] = {&single};
  const Seq2SeqModel<float>* three[] = {&copies[0], &copies[1], &copies[2]};
  const auto a = decode_corpus<float>(one, sources, dc);
  const auto b = decode_corpus<float>(three, sources, dc);
  std::ostringstream ta, tb;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    for (const auto& w : hypothesis_text(single, a[i][0], false)) ta << w << ' ';
    for (const auto& w : hypothesis_text(copies[0], b[i][0], false)) tb << w << ' ';
    ta << a[i][0].logprob << '\n';
    tb << b[i][0].logprob << '\n';
  }
  Checks checks;
  checks.expect(a.size() == 100 && b.size() == 100, "sentence count");
  checks.expect(ta.str() == tb.str(), "ensemble output differs");
  return checks.outcome("100 sentences, beam 12, " + std::to_string(ta.str().size()) +
                        " bytes of output compared (words and scores)");
}

Outcome tying_accounting() {
  Checks checks;
  Rng rng(2024);
  for (int i = 0; i < 10; ++i) {
    ModelConfig c = tiny_config(1 + rng.below(12), 1 + rng.below(12));
    c.dec_hidden = 1 + rng.below(12);
    c.alignment_dim = rng.below(8);
    c.init_mode = rng.below(2) ? InitMode::mean_state : InitMode::zero;
    c.output_mode = rng.below(2) ? OutputMode::conditional : OutputMode::simple;
    const std::size_t words = 1 + rng.below(40);
    c.tying_mode = TyingMode::tied2;
    const auto n2 = Seq2SeqModel<float>(c, word_vocab(words), word_vocab(words)).count_params();
    c.tying_mode = TyingMode::tied3;
    const auto n3 = Seq2SeqModel<float>(c, word_vocab(words), word_vocab(words)).count_params();
    checks.expect(n2 - n3 == (words + Vocabulary::kNumReserved) * c.emb_dim,
                  "config " + std::to_string(i));
  }
  ModelConfig c;
  c.emb_dim = 200;
  c.enc_hidden = c.dec_hidden = 500;
  c.tying_mode = TyingMode::tied2;
  const double tied2 = static_cast<double>(param_count_formula(c, 10041, 12433));
  c.tying_mode = TyingMode::tied3;
  const double tied3 = static_cast<double>(param_count_formula(c, 16189, 16189));
  const double reduction = (tied2 - tied3) / tied2;
  const double published = (12.0e6 - 10.8e6) / 12.0e6;
  checks.expect(std::abs(reduction / published - 1.0) < 0.05, "reduction");
  checks.expect(std::abs(tied2 / 12.0e6 - 1.0) < 0.05, "tied2 size");
  checks.expect(std::abs(tied3 / 10.8e6 - 1.0) < 0.05, "tied3 size");
  return checks.outcome("10 random configs exact; tied2 " + fmt("%.0f", tied2) + ", tied3 " +
                        fmt("%.0f", tied3) + ", reduction " + fmt("%.2f%%", 100 * reduction) +
                        " vs 12M->10.8M " + fmt("%.2f%%", 100 * published));
}

Outcome bleu_fixture() {
  Checks checks;
  const auto hyps = read_sentences(std::string(KNMT_TEST_DATA) + "/bleu/hyp.txt");
  const auto refs = read_sentences(std::string(KNMT_TEST_DATA) + "/bleu/ref.txt");
  checks.expect(hyps.size() == 3 && refs.size() == 3, "fixture size");
  const auto r = bleu(hyps, refs);
  // Frozen output of tests/data/bleu/multi_bleu_reference.py on the fixture.
  const double reference = 34.1999138150;
  checks.expect(std::abs(r.bleu - reference) < 0.01, "fixture vs reference script");
  checks.expect(std::abs(r.bleu - oracle_bleu(hyps, refs)) < 0.01, "fixture vs counting oracle");
  const double identity = bleu(refs, refs).bleu;
  checks.expect(std::abs(identity - 100.0) < 1e-9, "identity");
  const std::vector<Sentence> h = {split_words("the the the the")};
  const std::vector<Sentence> rr = {split_words("the cat sat down")};
  const double zero = bleu(h, rr).bleu;
  checks.expect(zero == 0.0, "zero precision");
  return checks.outcome("fixture " + fmt("%.4f", r.bleu) + " vs reference " + fmt("%.4f", reference) +
                        ", identity " + fmt("%.2f", identity) + ", zero-precision " + fmt("%.2f", zero));
}

Outcome bpe_properties() {
  Checks checks;
  {
    Rng rng(7);
    const auto corpus = random_word_corpus(rng, 200, 10);
    const auto model = SubwordModel::learn(corpus, 100);
    checks.expect(model.merges() == naive_learn(corpus, 100, 2), "learned merges vs oracle");
    std::size_t agree = 0;
    for (int i = 0; i < 100; ++i) {
      const auto w = random_word(rng, 12);
      agree += model.segment_word(w) == sequential_segment(model.merges(), w);
    }
    checks.expect(agree == 100, "segmentation oracle " + std::to_string(agree) + "/100");
  }
  std::size_t round_trips = 0;
  {
    Rng rng(3);
    const auto corpus = random_word_corpus(rng, 1000, 12);
    const auto model = SubwordModel::learn(corpus, 80);
    for (const auto& s : corpus) {
      const auto back = detokenize_bpe(model.apply(s));
      round_trips += back.words == s && !back.dangling;
    }
    checks.expect(round_trips == 1000, "detokenize round trip");
  }
  std::size_t equal = 0;
  {
    Rng rng(11);
    const auto model = SubwordModel::learn(random_word_corpus(rng, 300, 10), 60);
    const std::vector<std::string> tags = {"N", "V+Past", "Adj", "P"};
    for (int i = 0; i < 10000; ++i) {
      FactoredSentence s;
      const std::size_t n = 1 + rng.below(15);
      for (std::size_t k = 0; k < n; ++k) s.push_back({random_word(rng, 10), tags[rng.below(tags.size())]});
      const auto out = factored_bpe_apply(model, s);
      equal += out.lemmas.size() == out.factors.size();
    }
    checks.expect(equal == 10000, "factored stream lengths");
  }
  return checks.outcome("100/100 words agree with sequential merging, " + std::to_string(round_trips) +
                        "/1000 sentences round-trip, " + std::to_string(equal) +
                        "/10000 factored sentences equal-length");
}

Outcome backtranslation_direction() {
  Stopwatch clock;
  const auto task = shifted_lexical_task(60, 2000, 8000, 100, 200, 2017);
  auto s = toy_schedule();
  s.max_epochs = 100;
  s.validate_every = 250;
  s.patience = 8;
  s.bleu_on_words = false;
  s.smooth_bleu = true;
  const auto cfg = tiny_config(16, 32);
  const auto fit = [&](const ParallelCorpus& c, const ParallelCorpus& dev, std::uint64_t seed) {
    auto m = Seq2SeqModel<float>::build(cfg, Vocabulary::build(c.source), Vocabulary::build(c.target),
                                        std::nullopt, seed);
    return train(std::move(m), c, dev, s, seed);
  };
  const auto baseline = fit(task.train, task.dev, 11);
  const double base_bleu = validation_bleu(baseline.best, task.test, 1, false, false).bleu;

  const auto reverse = fit(flip(task.train), flip(task.dev), 12);
  std::vector<std::vector<int>> mono_ids;
  for (const auto& m : task.mono) mono_ids.push_back(reverse.best.source_vocab().encode(m, false));
  DecodeConfig dc;
  dc.beam = 4;
  const Seq2SeqModel<float>* one[] = {&reverse.best};
  const auto decoded = decode_corpus<float>(one, mono_ids, dc);
  std::size_t next = 0;
  const auto bt = assemble_bt_corpus(
      task.train, task.mono,
      [&](const Sentence&) -> Sentence { return reverse.best.target_vocab().decode(decoded[next++][0].words()); },
      task.mono.size());
  const auto augmented = fit(bt.corpus, task.dev, 11);
  const double bt_bleu = validation_bleu(augmented.best, task.test, 1, false, false).bleu;
  const double t = clock.seconds();
  Checks checks;
  checks.expect(bt_bleu >= base_bleu, "back-translation below baseline");
  return checks.outcome("2000 pairs + " + std::to_string(bt.corpus.size() - task.train.size()) +
                        " synthetic; held-out BLEU baseline " + fmt("%.2f", base_bleu) + ", with BT " +
                        fmt("%.2f", bt_bleu) + ", " + fmt("%.1f s", t));
}

Outcome factored_pipeline() {
  Checks checks;
  // Surface word = lemma + suffix of its tag.
  const auto lemmas = toy_lexicon(30, 21);
  const std::vector<std::pair<std::string, std::string>> tags = {{"N+sg", ""}, {"N+pl", "s"}, {"V+pst", "ed"}};
  ReinflectionDictionary dict;
  std::set<std::pair<std::string, std::string>> known;
  for (const auto& l : lemmas)
    for (const auto& [tag, suffix] : tags)
      if (known.size() < 50) {
        dict.add(l, tag, l + suffix);
        known.insert({l, tag});
      }
  checks.expect(dict.size() == 50, "dictionary size");

  Rng rng = Rng::named(21, "factored-task");
  ParallelCorpus corpus, held_out;
  for (int i = 0; i < 450; ++i) {
    Sentence src, lem, fac;
    const std::size_t n = 2 + rng.below(4);
    for (std::size_t j = 0; j < n; ++j) {
      const auto& l = lemmas[rng.below(lemmas.size())];
      const auto& [tag, suffix] = tags[rng.below(tags.size())];
      src.push_back(l + suffix);
      lem.push_back(l);
      fac.push_back(tag);
    }
    (i < 400 ? corpus : held_out).add_factored(src, lem, fac);
  }
  auto cfg = tiny_config(8, 16);
  cfg.factored = true;
  auto model = Seq2SeqModel<float>::build(cfg, Vocabulary::build(corpus.source),
                                          Vocabulary::build(corpus.target),
                                          Vocabulary::build(corpus.factors, false), 21);
  auto s = toy_schedule();
  s.max_epochs = 40;
  s.validate_fraction = 1.0;
  s.bleu_on_words = false;
  s.smooth_bleu = true;
  const auto trained = train(std::move(model), corpus, held_out, s, 21);

  std::size_t hyps = 0, resolved = 0, fallbacks = 0;
  SearchOptions opt;
  opt.beam = 4;
  opt.factor_k = 3;
  for (const auto& src : held_out.source) {
    const auto ids = trained.best.source_vocab().encode(src, false);
    opt.max_len = default_max_len(ids.size());
    for (const auto& h : factored_beam_decode(trained.best, ids, opt)) {
      ++hyps;
      const auto [lem, fac] = factored_streams(trained.best, h);
      checks.expect(lem.size() == fac.size() && h.words().size() == h.factors.size(), "stream lengths");
      const auto r = reinflect(dict, lem, fac, 1);
      checks.expect(r.sentences.size() == 1 && r.sentences[0].size() == lem.size(), "reinflected length");
      if (r.sentences.empty()) continue;
      std::size_t misses = 0;
      for (std::size_t j = 0; j < lem.size(); ++j) {
        const auto c = dict.lookup(lem[j], fac[j]);
        if (c.empty()) {
          ++misses;
          checks.expect(r.sentences[0][j] == lem[j], "fallback is not the lemma");
        } else {
          checks.expect(r.sentences[0][j] == c[0].word, "known pair not resolved");
        }
      }
      checks.expect(misses == r.misses, "miss count");
      fallbacks += misses;
      resolved += lem.size() - misses;
    }
  }
  checks.expect(resolved > 0 && fallbacks > 0, "both known and unknown pairs exercised");

  double worst = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng r(seed + 4000);
    const auto tiny = tiny_search_model(seed + 500, 4, 3);
    const auto src = random_ids(r, 8, 1 + r.below(3));
    SearchOptions o;
    o.beam = 512;
    o.factor_k = 3;
    o.max_len = 1 + r.below(3);
    o.length_norm = false;
    const auto nbest = factored_beam_decode(tiny, src, o);
    const auto oracle = exhaustive_search(tiny, src, o.max_len);
    if (nbest.empty()) {
      checks.expect(false, "empty factored n-best");
      continue;
    }
    const double diff = std::abs(nbest[0].logprob - oracle.logprob);
    worst = std::max(worst, diff);
    checks.expect(nbest[0].tokens == oracle.tokens && nbest[0].factors == oracle.factors,
                  "factored beam vs enumeration, seed " + std::to_string(seed));
    checks.expect(diff < 1e-9, "factored score, seed " + std::to_string(seed));
  }
  return checks.outcome("toy model at " + fmt("%.1f", trained.best_bleu) + " held-out BLEU; " +
                        std::to_string(hyps) + " hypotheses, " + std::to_string(resolved) +
                        " tokens resolved, " + std::to_string(fallbacks) +
                        " lemma fallbacks, 30 enumerations max |Δ| " + fmt("%.1e", worst));
}

Outcome reranking() {
  Checks checks;
  double min_gain = 1e9;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const auto d = planted_dev(100 + trial, 25, false);
    const std::vector<std::string> names{"nmt", "lm"};
    TuneOptions opt;
    opt.seed = trial;
    const auto r = tune_weights(d.lists, d.refs, names, opt);
    const double uniform = dev_bleu(d, RerankWeights::uniform(names));
    const double achieved = dev_bleu(d, r.weights);
    min_gain = std::min(min_gain, achieved - uniform);
    checks.expect(achieved >= uniform, "trial " + std::to_string(trial));
  }
  const auto d = planted_dev(17, 40, true);
  // The reference is always in the list, so the oracle ceiling is 100.
  std::vector<Sentence> ceiling_pick;
  for (std::size_t i = 0; i < d.lists.size(); ++i) {
    double best = -1;
    Sentence pick;
    for (const auto& e : d.lists[i]) {
      const double b = bleu(std::vector<Sentence>{e.tokens}, std::vector<Sentence>{d.refs[i]}, true).bleu;
      if (b > best) {
        best = b;
        pick = e.tokens;
      }
    }
    ceiling_pick.push_back(pick);
  }
  const double ceiling = bleu(ceiling_pick, d.refs).bleu;
  const auto r = tune_weights(d.lists, d.refs, {"nmt", "lm", "oracle"});
  const double achieved = dev_bleu(d, r.weights);
  checks.expect(std::abs(achieved - ceiling) < 1e-9, "oracle ceiling not reached");
  return checks.outcome("20 trials, min gain over uniform " + fmt("%.2f", min_gain) +
                        " BLEU; planted oracle " + fmt("%.2f", achieved) + " vs ceiling " +
                        fmt("%.2f", ceiling) + " (uniform " + fmt("%.2f", r.uniform_bleu) + ")");
}

Outcome determinism() {
  Stopwatch clock;
  const fs::path root = fs::temp_directory_path() / "knmt_acceptance_pipeline";
  fs::remove_all(root);
  const fs::path a = root / "a", b = root / "b";
  const auto run = [&](const fs::path& out) {
    const std::string cmd = "KNMT='" + std::string(KNMT_CLI) + "' DATA='" + KNMT_SOURCE_DIR +
                            "/data/toy' bash '" + KNMT_SOURCE_DIR + "/tools/pipeline.sh' '" +
                            out.string() + "' 1 > '" + out.string() + ".stdout' 2>&1";
    return std::system(cmd.c_str());
  };
  fs::create_directories(root);
  Checks checks;
  checks.expect(run(a) == 0, "first run failed");
  checks.expect(run(b) == 0, "second run failed");
  std::size_t files = 0, bytes = 0;
  if (checks.ok()) {
    for (const auto& entry : fs::directory_iterator(a)) {
      const auto name = entry.path().filename();
      const auto other = b / name;
      const std::string x = read_file(entry.path());
      checks.expect(fs::exists(other) && x == read_file(other), "differs: " + name.string());
      ++files;
      bytes += x.size();
    }
    std::size_t files_b = 0;
    for ([[maybe_unused]] const auto& entry : fs::directory_iterator(b)) ++files_b;
    checks.expect(files == files_b, "file sets differ");
  }
  const std::string summary = read_file(a.string() + ".stdout");
  fs::remove_all(root);
  std::string flat;
  for (char c : summary) flat += c == '\n' ? ' ' : c;
  return checks.outcome(std::to_string(files) + " files (" + std::to_string(bytes) +
                        " bytes) identical across two runs, " + fmt("%.1f s", clock.seconds()) +
                        "; " + flat);
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "gradient integrity", gradient_integrity},
      {2, "copy-task convergence", copy_convergence},
      {3, "reverse-task generalization", reverse_generalization},
      {4, "beam vs exhaustive search", beam_vs_exhaustive},
      {5, "ensemble identity", ensemble_identity},
      {6, "tying accounting", tying_accounting},
      {7, "BLEU fixture", bleu_fixture},
      {8, "BPE", bpe_properties},
      {9, "back-translation direction", backtranslation_direction},
      {10, "factored pipeline", factored_pipeline},
      {11, "reranking", reranking},
      {12, "determinism", determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << "C" << c.id << " " << c.title << ": " << o.detail
              << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
  return failed ? 1 : 0;
}
