#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "knmt/bleu.hpp"
#include "knmt/corpus.hpp"
#include "knmt/error.hpp"
#include "knmt/rng.hpp"
#include "bleu_oracle.hpp"

using namespace knmt;
using namespace knmt::testing;

namespace {

std::vector<Sentence> random_corpus(Rng& rng, std::size_t n, std::size_t words) {
  std::vector<Sentence> out(n);
  for (auto& s : out) {
    const std::size_t len = 1 + rng.below(12);
    for (std::size_t i = 0; i < len; ++i) s.push_back("t" + std::to_string(rng.below(words)));
  }
  return out;
}

}  // namespace

TEST_CASE("fixture matches the reference multi-bleu port") {
  const auto hyps = read_sentences(std::string(KNMT_TEST_DATA) + "/bleu/hyp.txt");
  const auto refs = read_sentences(std::string(KNMT_TEST_DATA) + "/bleu/ref.txt");
  REQUIRE(hyps.size() == 3);
  const auto r = bleu(hyps, refs);
  // Frozen from tests/data/bleu/multi_bleu_reference.py.
  CHECK(std::abs(r.bleu - 34.1999138150) < 0.01);
  CHECK(r.format() ==
        "BLEU = 34.20, 84.0/45.5/26.3/18.8 (BP=0.923, ratio=0.926, hyp_len=25, ref_len=27)");
  CHECK(std::abs(r.bleu - oracle_bleu(hyps, refs)) < 1e-9);
}

TEST_CASE("identity scores 100 and any zero precision scores 0") {
  const std::vector<Sentence> refs = {split_words("the cat sat down"),
                                      split_words("a b c d e f")};
  CHECK(bleu(refs, refs).format().starts_with("BLEU = 100.00, 100.0/100.0/100.0/100.0"));

  const std::vector<Sentence> h = {split_words("the the the the")};
  const std::vector<Sentence> r = {split_words("the cat sat down")};
  const auto rep = bleu(h, r);
  CHECK(rep.matches[0] == 1);
  CHECK(rep.totals[0] == 4);
  CHECK(rep.precisions[0] == doctest::Approx(25.0));
  CHECK(rep.matches[1] == 0);
  CHECK(rep.bleu == 0.0);
  CHECK(rep.format().starts_with("BLEU = 0.00"));

  // Three-word hypotheses have no 4-grams.
  const std::vector<Sentence> s = {split_words("a b c")};
  CHECK(bleu(s, s).bleu == 0.0);
}

TEST_CASE("brevity penalty") {
  const std::vector<Sentence> h = {split_words("a b c d")};
  const std::vector<Sentence> r = {split_words("a b c d e f g h")};
  const auto rep = bleu(h, r);
  CHECK(rep.brevity_penalty == doctest::Approx(std::exp(1.0 - 2.0)));
  CHECK(rep.bleu == doctest::Approx(100 * std::exp(-1.0)));
  CHECK(rep.ratio == doctest::Approx(0.5));
  // Longer hypotheses are not penalized by BP.
  CHECK(bleu(r, h).brevity_penalty == 1.0);
}

TEST_CASE("errors") {
  const std::vector<Sentence> none;
  CHECK_THROWS_AS(bleu(none, none), ContractError);
  const std::vector<Sentence> one = {split_words("a")};
  const std::vector<Sentence> two = {split_words("a"), split_words("b")};
  CHECK_THROWS_AS(bleu(one, two), ContractError);
}

TEST_CASE("random corpora agree with brute-force counting") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    auto refs = random_corpus(rng, n, 4);
    auto hyps = random_corpus(rng, n, 4);
    // Bias some hypotheses toward their reference.
    for (std::size_t i = 0; i < n; ++i)
      if (rng.below(2)) hyps[i] = refs[i], hyps[i].resize(1 + rng.below(refs[i].size()));
    CHECK(std::abs(bleu(hyps, refs).bleu - oracle_bleu(hyps, refs)) < 1e-9);
  }
}

TEST_CASE("property: permutation invariance") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto refs = random_corpus(rng, 8, 3);
    auto hyps = random_corpus(rng, 8, 3);
    const double base = bleu(hyps, refs).bleu;
    std::vector<std::size_t> order(8);
    for (std::size_t i = 0; i < 8; ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    std::vector<Sentence> h2, r2;
    for (auto i : order) h2.push_back(hyps[i]), r2.push_back(refs[i]);
    CHECK(bleu(h2, r2).bleu == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("property: monotone in exact matches at fixed length") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t len = 4 + rng.below(8);
    Sentence ref;
    for (std::size_t i = 0; i < len; ++i) ref.push_back("r" + std::to_string(rng.below(5)));
    Sentence hyp;
    for (std::size_t i = 0; i < len; ++i) hyp.push_back("x" + std::to_string(i));
    std::vector<std::size_t> order(len);
    for (std::size_t i = 0; i < len; ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    double prev = bleu(std::vector<Sentence>{hyp}, std::vector<Sentence>{ref}).bleu;
    for (auto pos : order) {
      hyp[pos] = ref[pos];
      const double cur = bleu(std::vector<Sentence>{hyp}, std::vector<Sentence>{ref}).bleu;
      CHECK(cur >= prev);
      prev = cur;
    }
    CHECK(prev == doctest::Approx(100.0));
  }
}

TEST_CASE("smoothed variant is positive when unigrams match") {
  const std::vector<Sentence> h = {split_words("a b x y")};
  const std::vector<Sentence> r = {split_words("a b c d")};
  CHECK(bleu(h, r).bleu == 0.0);
  CHECK(bleu(h, r, true).bleu > 0.0);
}
