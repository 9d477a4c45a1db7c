#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "doctest.h"
#include "knmt/bleu.hpp"
#include "knmt/corpus.hpp"
#include "knmt/model.hpp"
#include "knmt/nbest.hpp"
#include "knmt/rng.hpp"
#include "toy_tasks.hpp"

using namespace knmt;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() /
          ("knmt_cli_" + std::to_string(Rng(reinterpret_cast<std::uintptr_t>(this)).next()));
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  /// Runs the binary with `args`; stdout and stderr go to files.
  int run(const std::string& args, const std::string& tag = "run") const {
    const std::string cmd = "KNMT_LOG=quiet '" + std::string(KNMT_CLI) + "' " + args + " > '" +
                            path(tag + ".out") + "' 2> '" + path(tag + ".err") + "'";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string read(const std::string& name) const {
    std::ifstream in(path(name), std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
  void write(const std::string& name, const std::vector<Sentence>& lines) const {
    write_sentences(path(name), lines);
  }
};

const char* kTiny =
    "--set emb_dim=6 --set enc_hidden=8 --set dec_hidden=8 --set dropout_p=0 --set lr=0.004 "
    "--set batch_size=8 --set max_epochs=3 --set final_beam=0 --set patience=100 ";

// A small trained checkpoint shared by the decoding cases.
struct Trained : Workspace {
  Trained() {
    const auto c = testing::copy_corpus(60, 8, 3);
    write("train.src", c.source);
    write("train.tgt", c.target);
    write("dev.src", std::vector<Sentence>(c.source.begin(), c.source.begin() + 10));
    write("dev.tgt", std::vector<Sentence>(c.target.begin(), c.target.begin() + 10));
    REQUIRE(run(std::string("train ") + kTiny + "--seed 4 --src " + path("train.src") + " --tgt " +
                path("train.tgt") + " --valid-src " + path("dev.src") + " --valid-tgt " +
                path("dev.tgt") + " --output " + path("m.ckpt") + " --log " + path("m.log")) == 0);
  }
};

}  // namespace

TEST_CASE("unknown configuration key is a one-line error") {
  Workspace w;
  CHECK(w.run("params --set no_such_key=1") == 1);
  const auto err = w.read("run.err");
  CHECK(err.starts_with("knmt: error: "));
  CHECK(err.find("no_such_key") != std::string::npos);
  CHECK(std::count(err.begin(), err.end(), '\n') == 1);
}

TEST_CASE("missing subcommand arguments fail") {
  Workspace w;
  CHECK(w.run("translate") == 1);
  CHECK(w.run("score-bleu --hyp " + w.path("none") + " --ref " + w.path("none")) == 1);
}

TEST_CASE("params matches the closed form") {
  Workspace w;
  REQUIRE(w.run("params --set src_vocab_size=10041 --set tgt_vocab_size=12433") == 0);
  ModelConfig c;
  CHECK(std::stoull(w.read("run.out")) == param_count_formula(c, 10041, 12433));
}

TEST_CASE("score-bleu agrees with the library") {
  Workspace w;
  const std::vector<Sentence> ref = {split_words("a b c d e"), split_words("f g h i")};
  const std::vector<Sentence> hyp = {split_words("a b c d x"), split_words("f g h i")};
  w.write("ref.txt", ref);
  w.write("hyp.txt", hyp);
  REQUIRE(w.run("score-bleu --hyp " + w.path("hyp.txt") + " --ref " + w.path("ref.txt")) == 0);
  CHECK(w.read("run.out") == bleu(hyp, ref).format() + "\n");
}

TEST_CASE("bpe-learn and bpe-apply round trip through --merge-bpe scoring") {
  Workspace w;
  const auto c = testing::reversal_corpus(50, testing::toy_lexicon(20, 2), 2);
  w.write("text.txt", c.source);
  REQUIRE(w.run("bpe-learn --merges 20 --input " + w.path("text.txt") + " --output " + w.path("bpe")) == 0);
  REQUIRE(w.run("bpe-apply --bpe " + w.path("bpe") + " --input " + w.path("text.txt") + " --output " +
                w.path("pieces.txt")) == 0);
  CHECK(w.read("pieces.txt").find("@@") != std::string::npos);
  REQUIRE(w.run("score-bleu --merge-bpe --hyp " + w.path("pieces.txt") + " --ref " + w.path("text.txt")) == 0);
  CHECK(w.read("run.out").starts_with("BLEU = 100.00"));
}

TEST_CASE("decoding from the command line") {
  Trained t;
  const std::string in = " --input " + t.path("dev.src");

  SUBCASE("beam 1 equals greedy") {
    REQUIRE(t.run("translate --model " + t.path("m.ckpt") + " --beam 1" + in, "beam") == 0);
    REQUIRE(t.run("translate --model " + t.path("m.ckpt") + " --greedy" + in, "greedy") == 0);
    const auto out = t.read("beam.out");
    CHECK(out == t.read("greedy.out"));
    CHECK(std::count(out.begin(), out.end(), '\n') == 10);
  }
  SUBCASE("an ensemble of copies equals the single model") {
    const auto m = t.path("m.ckpt");
    REQUIRE(t.run("translate --model " + m + " --nbest " + t.path("one.nbest") + in, "one") == 0);
    REQUIRE(t.run("translate --ensemble " + m + "," + m + "," + m + " --nbest " + t.path("three.nbest") + in,
                  "three") == 0);
    CHECK(t.read("one.out") == t.read("three.out"));
    CHECK(t.read("one.nbest") == t.read("three.nbest"));
    std::istringstream lines(t.read("one.nbest"));
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
      const auto e = parse_nbest_line(line);
      CHECK(e.index < 10);
      ++n;
    }
    CHECK(n > 10);
  }
  SUBCASE("params reads a checkpoint") {
    REQUIRE(t.run("params --model " + t.path("m.ckpt")) == 0);
    const auto m = Seq2SeqModel<float>::load(t.path("m.ckpt"));
    CHECK(std::stoull(t.read("run.out")) == m.count_params());
  }
  SUBCASE("training is reproducible for a fixed seed") {
    REQUIRE(t.run(std::string("train ") + kTiny + "--seed 4 --src " + t.path("train.src") + " --tgt " +
                  t.path("train.tgt") + " --valid-src " + t.path("dev.src") + " --valid-tgt " +
                  t.path("dev.tgt") + " --output " + t.path("again.ckpt") + " --log " +
                  t.path("again.log")) == 0);
    CHECK(t.read("again.ckpt") == t.read("m.ckpt"));
    CHECK(t.read("again.log") == t.read("m.log"));
  }
}
