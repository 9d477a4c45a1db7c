#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "knmt/error.hpp"
#include "knmt/trainer.hpp"
#include "support.hpp"
#include "toy_tasks.hpp"

using namespace knmt;
using namespace knmt::testing;

namespace {

Seq2SeqModel<float> model_for(const ParallelCorpus& c, std::uint64_t seed, std::size_t emb = 4,
                              std::size_t hidden = 6) {
  const Vocabulary v = Vocabulary::build(c.source);
  return Seq2SeqModel<float>::build(tiny_config(emb, hidden), v, v, std::nullopt, seed);
}

TrainSchedule quick_schedule() {
  TrainSchedule s;
  s.lr = 4e-3;
  s.batch_size = 8;
  s.max_epochs = 3;
  s.validate_fraction = 0.5;
  s.final_beam = 0;
  s.bleu_on_words = false;
  return s;
}

// References made of tokens the model cannot produce: BLEU stays 0.
ParallelCorpus unreachable_valid() {
  ParallelCorpus v;
  v.add(split_words("w1 w2"), split_words("zz zz zz zz"));
  v.add(split_words("w3"), split_words("zz zz zz zz zz"));
  return v;
}

}  // namespace

TEST_CASE("adam") {
  SUBCASE("zero gradients leave parameters unchanged") {
    ParameterSet<double> ps;
    auto& w = ps.add("w", {2, 3});
    for (std::size_t i = 0; i < w.size(); ++i) w.data[i] = 0.1 * static_cast<double>(i) - 0.2;
    const auto before = w.data;
    ps.zero_grad();
    Adam<double> adam(4e-4);
    for (int i = 0; i < 3; ++i) adam.step(ps);
    CHECK(w.data == before);
    CHECK(adam.t() == 3);
  }
  SUBCASE("first step on a unit gradient moves by lr") {
    ParameterSet<double> ps;
    auto& w = ps.add("w", {1});
    w.data[0] = 1.0;
    ps.zero_grad();
    w.grad[0] = 1.0;
    Adam<double> adam(4e-4);
    adam.step(ps);
    // m̂ = v̂ = 1 after bias correction.
    CHECK(w.data[0] - 1.0 == doctest::Approx(-4e-4 / (1.0 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("second step against a closed form") {
    ParameterSet<double> ps;
    auto& w = ps.add("w", {1});
    ps.zero_grad();
    Adam<double> adam(0.1);
    w.grad[0] = 2.0;
    adam.step(ps);
    w.grad[0] = -1.0;
    adam.step(ps);
    const double m = 0.9 * (0.1 * 2.0) + 0.1 * -1.0;
    const double v = 0.999 * (0.001 * 4.0) + 0.001 * 1.0;
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    const double expected = -0.1 * 2.0 / (2.0 + 1e-8) - 0.1 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(w.data[0] == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("checked mode names the offending parameter") {
    ParameterSet<double> ps;
    ps.add("good", {1});
    auto& bad = ps.add("bad", {2});
    ps.zero_grad();
    bad.grad[1] = std::numeric_limits<double>::quiet_NaN();
    Adam<double> adam(1e-3);
    CHECK_THROWS_WITH_AS(adam.step(ps, true), doctest::Contains("'bad'"), NumericError);
  }
}

TEST_CASE("global norm clipping") {
  ParameterSet<double> ps;
  auto& a = ps.add("a", {2});
  auto& b = ps.add("b", {1});
  ps.alias("a2", "a");
  ps.zero_grad();
  a.grad = {3.0, 4.0};
  b.grad = {12.0};
  CHECK(global_grad_norm(ps) == doctest::Approx(13.0));
  CHECK(clip_global_norm(ps, 5.0) == doctest::Approx(13.0));
  CHECK(global_grad_norm(ps) == doctest::Approx(5.0));
  CHECK(a.grad[0] == doctest::Approx(3.0 * 5.0 / 13.0));
  // Below the threshold nothing changes.
  const auto before = b.grad;
  clip_global_norm(ps, 100.0);
  CHECK(b.grad == before);
}

TEST_CASE("schedule configuration") {
  TrainSchedule s;
  CHECK(s.set("patience", "30"));
  CHECK(s.patience == 30);
  CHECK(s.set("max_updates", "0"));
  CHECK(s.max_updates == std::size_t{0});
  CHECK(s.set("max_updates", "none"));
  CHECK(!s.max_updates);
  CHECK(!s.set("emb_dim", "3"));
  CHECK_THROWS_AS(s.set("lr", "fast"), ConfigError);
  CHECK_THROWS_AS(s.set("batch_size", "0"), ConfigError);
  TrainSchedule t;
  for (const auto& [k, v] : s.items()) CHECK(t.set(k, v));
  CHECK(t.items() == s.items());
  s.validate_fraction = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("log line format") {
  ValidationRecord r{1200, 2.25, 1.234567891, 35.5, 36.25};
  CHECK(format_record(r) == "1200\t2.250\t1.234568\t35.50\t36.25");
}

TEST_CASE("training is reproducible and seeds differ") {
  const auto corpus = copy_corpus(40, 8, 1);
  const auto s = quick_schedule();
  const auto a = train(model_for(corpus, 5), corpus, corpus, s, 5);
  const auto b = train(model_for(corpus, 5), corpus, corpus, s, 5);
  CHECK(parameter_hash(a.best) == parameter_hash(b.best));
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(format_record(a.log[i]) == format_record(b.log[i]));

  const auto reps = train_replicas([&](std::uint64_t seed) { return model_for(corpus, seed); },
                                   corpus, corpus, s, {5, 6});
  REQUIRE(reps.size() == 2);
  CHECK(parameter_hash(reps[0].best) == parameter_hash(a.best));
  CHECK(parameter_hash(reps[0].best) != parameter_hash(reps[1].best));
}

TEST_CASE("patience counts strictly non-improving validations") {
  const auto corpus = copy_corpus(20, 6, 2);
  auto s = quick_schedule();
  s.validate_every = 1;
  s.max_epochs = 50;
  for (const std::size_t p : {1, 2, 4}) {
    s.patience = p;
    const auto r = train(model_for(corpus, 3), corpus, unreachable_valid(), s, 3);
    CHECK(r.log.size() == p + 1);
    CHECK(r.stop_reason == "patience");
    CHECK(r.updates == p + 1);
    // The first validation is the selected one.
    CHECK(r.best_bleu == 0.0);
  }
}

TEST_CASE("best checkpoint dominates the final one") {
  const auto corpus = copy_corpus(60, 8, 4);
  auto s = quick_schedule();
  s.max_epochs = 8;
  s.patience = 100;
  const auto r = train(model_for(corpus, 9), corpus, corpus, s, 9);
  double best = -1;
  for (const auto& rec : r.log) {
    best = std::max(best, rec.bleu);
    CHECK(rec.best == best);
    CHECK(rec.bleu <= r.best_bleu);
  }
  CHECK(validation_bleu(r.best, corpus, 1, false, false).bleu == doctest::Approx(r.best_bleu));
}

TEST_CASE("clipped gradient norm never exceeds the threshold") {
  const auto corpus = copy_corpus(30, 8, 5);
  auto s = quick_schedule();
  s.max_norm = 0.5;
  s.lr = 0.05;
  double worst = 0;
  std::size_t calls = 0;
  TrainHooks hooks;
  hooks.after_update = [&](std::size_t, Seq2SeqModel<float>& m) {
    worst = std::max(worst, global_grad_norm(m.params()));
    ++calls;
  };
  train(model_for(corpus, 8), corpus, corpus, s, 8, nullptr, hooks);
  CHECK(calls > 0);
  CHECK(worst <= 0.5 + 1e-6);
}

TEST_CASE("divergence keeps the last good checkpoint") {
  const auto corpus = copy_corpus(30, 8, 6);
  auto s = quick_schedule();
  s.validate_every = 2;
  s.max_epochs = 5;
  TrainHooks hooks;
  hooks.after_update = [](std::size_t update, Seq2SeqModel<float>& m) {
    if (update == 5) m.params().get("out.b").data[0] = std::numeric_limits<float>::quiet_NaN();
  };
  const auto r = train(model_for(corpus, 7), corpus, corpus, s, 7, nullptr, hooks);
  CHECK(r.diverged);
  CHECK(r.stop_reason == "diverged");
  CHECK(r.updates == 5);
  for (const auto* t : r.best.params().tensors())
    for (const float x : t->data) REQUIRE(std::isfinite(x));

  s.checked = true;
  const auto c = train(model_for(corpus, 7), corpus, corpus, s, 7, nullptr, hooks);
  CHECK(c.diverged);
}

TEST_CASE("factored model with one factor follows the word model") {
  const auto words = copy_corpus(30, 8, 7);
  ParallelCorpus fact;
  for (std::size_t i = 0; i < words.size(); ++i)
    fact.add_factored(words.source[i], words.target[i], Sentence(words.target[i].size(), "F0"));
  const Vocabulary v = Vocabulary::build(words.source);
  auto c = tiny_config(4, 6);
  c.dropout_p = 0.2;
  auto word = Seq2SeqModel<float>::build(c, v, v, std::nullopt, 11);
  c.factored = true;
  auto factored = Seq2SeqModel<float>::build(c, v, v, tag_vocab(1), 11);
  auto s = quick_schedule();
  s.max_epochs = 2;
  const auto a = train(std::move(word), words, words, s, 11);
  const auto b = train(std::move(factored), fact, fact, s, 11);
  for (const auto& name : a.best.params().names()) {
    CHECK_MESSAGE(a.best.params().get(name).data == b.best.params().get(name).data, name);
  }
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss == b.log[i].loss);
}

TEST_CASE("fine-tuning") {
  const auto corpus = copy_corpus(20, 6, 8, 1, 2);
  auto base = model_for(corpus, 12, 2, 3);
  const auto hash = parameter_hash(base);
  TrainSchedule s = quick_schedule();
  s.batch_size = 1;

  SUBCASE("zero updates returns the input checkpoint") {
    s.max_updates = 0;
    const auto r = finetune(base.clone(), FinetuneSpec{}, corpus, corpus, s, 1);
    CHECK(parameter_hash(r.best) == hash);
    CHECK(r.updates == 0);
    CHECK(r.log.empty());
  }
  SUBCASE("first validation at update 5000") {
    s.max_updates = 5000;
    s.max_epochs = 1000;
    std::ostringstream log;
    const auto r = finetune(base.clone(), FinetuneSpec{}, corpus, corpus, s, 1, &log);
    REQUIRE(r.log.size() == 1);
    CHECK(r.log[0].update == 5000);
    CHECK(log.str().starts_with("5000\t"));
  }
  SUBCASE("loads from a checkpoint file") {
    const auto path = std::filesystem::temp_directory_path() / "knmt_finetune_test.ckpt";
    base.save(path.string());
    FinetuneSpec spec;
    spec.init_checkpoint = path.string();
    s.max_updates = 0;
    CHECK(parameter_hash(finetune(spec, corpus, corpus, s, 1).best) == hash);
    std::filesystem::remove(path);
  }
  SUBCASE("vocabulary or corpus mismatch is a configuration error") {
    const Vocabulary other = word_vocab(3);
    s.max_updates = 0;
    CHECK_THROWS_AS(finetune(base.clone(), FinetuneSpec{}, corpus, corpus, s, 1, nullptr, &other),
                    ConfigError);
    CHECK_THROWS_AS(
        finetune(base.clone(), FinetuneSpec{}, corpus, corpus, s, 1, nullptr, nullptr, &other),
        ConfigError);
    ParallelCorpus fact;
    fact.add_factored(split_words("w1"), split_words("w1"), split_words("F"));
    CHECK_THROWS_AS(finetune(base.clone(), FinetuneSpec{}, fact, fact, s, 1), ConfigError);
  }
}

TEST_CASE("empty inputs are rejected") {
  const auto corpus = copy_corpus(5, 4, 9);
  const ParallelCorpus none;
  CHECK_THROWS_AS(train(model_for(corpus, 1), none, corpus, quick_schedule(), 1), ContractError);
  CHECK_THROWS_AS(train(model_for(corpus, 1), corpus, none, quick_schedule(), 1), ContractError);
}
