#pragma once

// Joint byte-pair-encoding subwords.
//
// Words are split into UTF-8 characters with an end-of-word marker attached to
// the last one ("c</w>"). Learning repeatedly merges the most frequent
// adjacent pair; equal counts go to the lexicographically smallest
// (left, right). Applied output marks every non-final piece of a word with the
// "@@" continuation suffix.

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "knmt/vocab.hpp"

namespace knmt {

inline constexpr const char* kEndOfWord = "</w>";
inline constexpr const char* kContinuation = "@@";

/// UTF-8 code points of `word` with the end-of-word marker on the last one.
std::vector<std::string> word_symbols(const std::string& word);

class SubwordModel {
 public:
  using Merge = std::pair<std::string, std::string>;

  SubwordModel() = default;
  explicit SubwordModel(std::vector<Merge> merges);

  /// Learns jointly over every corpus. Stops early once no pair reaches
  /// `min_frequency`.
  static SubwordModel learn(std::span<const std::vector<Sentence>* const> corpora,
                            std::size_t num_merges, long min_frequency = 2);
  static SubwordModel learn(const std::vector<Sentence>& corpus, std::size_t num_merges,
                            long min_frequency = 2);

  const std::vector<Merge>& merges() const { return merges_; }

  /// Subword pieces of one word (unmarked, end-of-word marker stripped).
  std::vector<std::string> segment_word(const std::string& word) const;
  /// Marked subword sequence for a sentence.
  Sentence apply(const Sentence& sentence) const;

  /// "#bpe v1" then one "left right" merge per line.
  void save(std::ostream& out) const;
  static SubwordModel load(std::istream& in);
  void save(const std::string& path) const;
  static SubwordModel load(const std::string& path);

 private:
  std::vector<std::string> merge_symbols(const std::string& word) const;

  std::vector<Merge> merges_;
  std::map<Merge, std::size_t> rank_;
};

struct DetokenizeResult {
  Sentence words;
  /// The sentence ended on a continuation-marked piece.
  bool dangling = false;
};

/// Joins "@@"-marked pieces with their successors. Inverse of
/// SubwordModel::apply on text that does not itself contain the marker.
DetokenizeResult detokenize_bpe(std::span<const std::string> pieces);

struct FactoredToken {
  std::string lemma;
  std::string factors;
  bool operator==(const FactoredToken&) const = default;
};

using FactoredSentence = std::vector<FactoredToken>;

/// "lemma|factors" tokens; a literal '|' inside a lemma is written "\p" and a
/// literal backslash "\\".
FactoredSentence parse_factored(const std::string& line);
std::string format_factored(const FactoredSentence& sentence);
std::string escape_lemma(const std::string& lemma);

struct FactoredStreams {
  Sentence lemmas;
  Sentence factors;
};

/// BPE on the lemma stream; each factor string is repeated once per piece
/// of its lemma, so both streams keep equal length.
FactoredStreams factored_bpe_apply(const SubwordModel& model, const FactoredSentence& sentence);
FactoredStreams factored_bpe_apply(const SubwordModel& model, const Sentence& lemmas,
                                   const Sentence& factors);

}  // namespace knmt
