#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "knmt/bleu.hpp"
#include "knmt/error.hpp"
#include "knmt/rerank.hpp"
#include "knmt/search.hpp"
#include "planted_dev.hpp"
#include "support.hpp"

using namespace knmt;
using namespace knmt::testing;

namespace {

NBestEntry entry(std::size_t index, const std::string& text,
                 std::vector<std::pair<std::string, double>> features) {
  NBestEntry e;
  e.index = index;
  e.tokens = split_words(text);
  e.features = std::move(features);
  return e;
}

}  // namespace

TEST_CASE("weights") {
  RerankWeights w({"nmt", "lm"}, {1.0, 0.5});
  CHECK(w.get("lm") == 0.5);
  w.set("wc", -0.25);
  CHECK(w.names() == std::vector<std::string>{"nmt", "lm", "wc"});
  CHECK_THROWS_AS(w.get("x"), ContractError);
  CHECK_THROWS_AS(RerankWeights({"a", "a"}, {1, 2}), ContractError);
  CHECK_THROWS_AS(RerankWeights({"a"}, {}), ContractError);
  CHECK_THROWS_AS(RerankWeights({"a", "b"}, {0.0, 0.0}).validate(), ContractError);

  const auto path = std::filesystem::temp_directory_path() / "knmt_weights_test.txt";
  w.save(path.string());
  CHECK(RerankWeights::load(path.string()) == w);
  {
    std::ofstream out(path);
    out << "# zero\nnmt = 0\n";
  }
  CHECK_THROWS_AS(RerankWeights::load(path.string()), ContractError);
  {
    std::ofstream out(path);
    out << "nmt 1\n";
  }
  CHECK_THROWS_AS(RerankWeights::load(path.string()), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("rescoring orders") {
  std::vector<NBestEntry> list{entry(0, "a", {{"x", -3.0}}), entry(0, "b c", {{"x", -1.0}}),
                               entry(0, "d e f", {{"x", -2.0}}), entry(0, "g", {{"x", -1.0}})};
  SUBCASE("single scorer with weight one, ties stable") {
    const auto r = rerank(list, RerankWeights({"x"}, {1.0}));
    CHECK(r[0].tokens == Sentence{"b", "c"});
    CHECK(r[1].tokens == Sentence{"g"});
    CHECK(r[2].tokens == Sentence{"d", "e", "f"});
    CHECK(r[3].total == -3.0);
  }
  SUBCASE("all weight on word count puts the longest first") {
    const auto r = rescore_nbest(list, {word_count_scorer()}, RerankWeights({"x", "wc"}, {0.0, 1.0}));
    CHECK(r[0].tokens.size() == 3);
    CHECK(r.back().tokens.size() == 1);
    CHECK(r[0].feature("wc") == 3.0);
  }
  SUBCASE("two scorers by hand") {
    // totals: a 2·-3 + -1·1 = -7; "b c" -2 - 2 = -4; "d e f" -4 - 3 = -7; g -2 - 1 = -3
    const auto r = rescore_nbest(list, {word_count_scorer()}, RerankWeights({"x", "wc"}, {2.0, -1.0}));
    CHECK(r[0].tokens == Sentence{"g"});
    CHECK(r[1].tokens == Sentence{"b", "c"});
    CHECK(r[2].tokens == Sentence{"a"});
    CHECK(r[3].tokens == Sentence{"d", "e", "f"});
    CHECK(r[0].total == -3.0);
  }
  SUBCASE("sentence grouping is kept") {
    list.push_back(entry(1, "z", {{"x", 5.0}}));
    list.insert(list.begin(), entry(1, "y", {{"x", 6.0}}));
    const auto r = rerank(list, RerankWeights({"x"}, {1.0}));
    CHECK(r[0].index == 0);
    CHECK(r[4].tokens == Sentence{"y"});
    CHECK(r[5].tokens == Sentence{"z"});
  }
  SUBCASE("non-finite scores drop the hypothesis") {
    NamedScorer bad{"bad", [](std::size_t, const NBestEntry& e) {
                      return e.tokens.size() == 1 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
                    }};
    CHECK(add_features(list, {bad}) == 2);
    CHECK(list.size() == 2);
    CHECK(list[0].tokens == Sentence{"b", "c"});
  }
  SUBCASE("missing features are errors") {
    CHECK_THROWS_AS(rerank(list, RerankWeights({"y"}, {1.0})), ContractError);
  }
}

TEST_CASE("rescoring is invariant to positive weight scaling") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<NBestEntry> list;
    for (int h = 0; h < 10; ++h) {
      list.push_back(entry(static_cast<std::size_t>(h % 3), "w",
                           {{"a", rng.uniform(-5, 5)}, {"b", rng.uniform(-5, 5)}}));
    }
    const RerankWeights w({"a", "b"}, {rng.uniform(-2, 2), rng.uniform(-2, 2)});
    const double c = std::exp(rng.uniform(-4, 4));
    const RerankWeights scaled({"a", "b"}, {w.values()[0] * c, w.values()[1] * c});
    const auto x = rerank(list, w), y = rerank(list, scaled);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i].features == y[i].features);
  }
}

TEST_CASE("tuning with a planted oracle feature reaches the ceiling") {
  const auto d = planted_dev(17, 40, true);
  const std::vector<std::string> names{"nmt", "lm", "oracle"};
  const auto r = tune_weights(d.lists, d.refs, names);
  CHECK(r.uniform_bleu < 100.0);
  CHECK(r.bleu == doctest::Approx(100.0));
  CHECK(dev_bleu(d, r.weights) == r.bleu);
  const double w_oracle = r.weights.get("oracle");
  CHECK(w_oracle > 0.0);
  CHECK(w_oracle > std::abs(r.weights.get("nmt")));
  CHECK(w_oracle > std::abs(r.weights.get("lm")));
}

TEST_CASE("tuning never falls below the uniform start") {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    CAPTURE(trial);
    const auto d = planted_dev(100 + trial, 25, false);
    const std::vector<std::string> names{"nmt", "lm"};
    TuneOptions opt;
    opt.seed = trial;
    const auto r = tune_weights(d.lists, d.refs, names, opt);
    const double uniform = dev_bleu(d, RerankWeights::uniform(names));
    CHECK(r.uniform_bleu == uniform);
    CHECK(r.bleu >= uniform);
    CHECK(dev_bleu(d, r.weights) == r.bleu);
    CHECK_NOTHROW(r.weights.validate());
  }
}

TEST_CASE("one feature: tuning matches the single-scorer 1-best") {
  const auto d = planted_dev(5, 30, false);
  const auto r = tune_weights(d.lists, d.refs, {"nmt"});
  const double positive = dev_bleu(d, RerankWeights({"nmt"}, {1.0}));
  CHECK(r.uniform_bleu == positive);
  for (const double c : {0.01, 3.0, 1e4}) CHECK(dev_bleu(d, RerankWeights({"nmt"}, {c})) == positive);
  // The tuner may only move to a direction that is strictly better.
  if (r.weights.get("nmt") > 0) CHECK(r.bleu == positive);
  else CHECK(r.bleu > positive);
}

TEST_CASE("tuning argument errors") {
  const auto d = planted_dev(1, 3, false);
  CHECK_THROWS_AS(tune_weights(d.lists, {}, {"nmt"}), ContractError);
  CHECK_THROWS_AS(tune_weights(d.lists, d.refs, {}), ContractError);
  CHECK_THROWS_AS(tune_weights(d.lists, d.refs, {"missing"}), ContractError);
}

TEST_CASE("model scorers") {
  const Vocabulary v = word_vocab(6);
  const auto model = Seq2SeqModel<double>::build(tiny_config(), v, v, std::nullopt, 4);
  const auto lm = LanguageModel<double>::build(LmConfig{}, v, 4);
  const std::vector<Sentence> sources{{"w1", "w2"}, {"w3"}};
  const auto nmt = nmt_scorer("nmt", model, sources);
  const auto lms = lm_scorer("lm", lm);
  const auto merged = lm_scorer("lm", lm, true);

  SearchOptions opt;
  opt.beam = 4;
  opt.max_len = 5;
  opt.length_norm = false;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto src = v.encode(sources[i], false);
    for (const auto& h : beam_decode(model, src, opt)) {
      NBestEntry e;
      e.index = i;
      e.tokens = v.decode(h.words());
      // Forced hypotheses carry no eos log-prob, so only finished ones agree.
      if (!h.forced) CHECK(nmt.score(i, e) == doctest::Approx(h.logprob).epsilon(1e-9));
      CHECK(lms.score(i, e) == lm.score(e.tokens));
    }
  }
  NBestEntry pieces;
  pieces.tokens = {"w1@@", "w2", "w3"};
  CHECK(merged.score(0, pieces) == lm.score(Sentence{"w1w2", "w3"}));
  pieces.index = 7;
  CHECK_THROWS_AS(nmt.score(7, pieces), ContractError);
}
