#pragma once

// Parallel corpora: reading, weighting, length filtering, batching and
// synthetic-pair assembly.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "knmt/vocab.hpp"

namespace knmt {

struct ParallelCorpus {
  std::vector<Sentence> source;
  std::vector<Sentence> target;
  /// Target factor stream, parallel to `target`; empty for word corpora.
  std::vector<Sentence> factors;
  /// Repetition count per segment (≥ 1).
  std::vector<int> weights;

  std::size_t size() const { return source.size(); }
  bool empty() const { return source.empty(); }
  bool factored() const { return !factors.empty(); }

  void add(Sentence src, Sentence tgt, int weight = 1);
  void add_factored(Sentence src, Sentence lemmas, Sentence tags, int weight = 1);
  void append(const ParallelCorpus& other);
  /// Throws ContractError when streams disagree in length or a weight is < 1.
  void validate() const;

  bool operator==(const ParallelCorpus&) const = default;
};

std::vector<Sentence> read_sentences(const std::string& path);
void write_sentences(const std::string& path, const std::vector<Sentence>& sentences);

/// Word corpus from two aligned files.
ParallelCorpus read_parallel(const std::string& src_path, const std::string& tgt_path,
                             int weight = 1);
/// Target file holds "lemma|factors" tokens.
ParallelCorpus read_factored(const std::string& src_path, const std::string& tgt_path,
                             int weight = 1);

/// Manifest lines "prefix<TAB>weight"; each prefix names `prefix.src_ext` and
/// `prefix.tgt_ext`. Relative prefixes resolve against the manifest's folder.
ParallelCorpus read_manifest(const std::string& manifest_path, const std::string& src_ext,
                             const std::string& tgt_ext, bool factored = false);

/// Keeps pairs whose sides both have length in [min_len, max_len] and, when
/// `max_ratio` is set, whose longer/shorter length ratio is ≤ max_ratio.
ParallelCorpus filter_corpus(const ParallelCorpus& corpus, std::size_t min_len,
                             std::size_t max_len, std::optional<double> max_ratio = {});

/// One epoch of segment indices. Each segment appears `weight` times. Order is
/// a seeded shuffle; with batch_size > 1, pools of shuffled segments are
/// sorted by length before cutting so batches hold similar lengths, and the
/// batch order is shuffled again.
std::vector<std::vector<std::size_t>> make_batches(const ParallelCorpus& corpus,
                                                   std::size_t batch_size, std::uint64_t seed);

struct BacktranslationResult {
  ParallelCorpus corpus;
  std::size_t skipped = 0;
};

/// Maps a target-language sentence to a synthetic source. Throwing (or
/// returning an empty sentence) marks a failure.
using ReverseTranslator = std::function<Sentence(const Sentence&)>;

/// original followed by pairs (translate(m), m) for the first `limit`
/// monolingual sentences, each with weight 1.
BacktranslationResult assemble_bt_corpus(const ParallelCorpus& original,
                                         const std::vector<Sentence>& mono_target,
                                         const ReverseTranslator& translate, std::size_t limit);

}  // namespace knmt
