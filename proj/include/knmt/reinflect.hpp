#pragma once

// Maps (lemma, factors) pairs back to surface words.

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "knmt/vocab.hpp"

namespace knmt {

class ReinflectionDictionary {
 public:
  struct Candidate {
    std::string word;
    long count = 0;
    bool operator==(const Candidate&) const = default;
  };

  void add(const std::string& lemma, const std::string& factors, const std::string& word,
           long count = 1);

  /// Counts surface words per (lemma, factors) from aligned tagged text:
  /// `words[i][j]` is the surface form of the "lemma|factors" token
  /// `tagged[i][j]`. ContractError on misaligned lines.
  static ReinflectionDictionary from_tagged(const std::vector<Sentence>& words,
                                            const std::vector<Sentence>& tagged);

  /// Descending count, ties lexicographic; empty if the pair is unknown.
  std::vector<Candidate> lookup(const std::string& lemma, const std::string& factors) const;
  std::size_t size() const { return table_.size(); }

  /// "lemma<TAB>factors<TAB>word<TAB>count" lines.
  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static ReinflectionDictionary load(std::istream& in);
  static ReinflectionDictionary load(const std::string& path);

 private:
  std::map<std::pair<std::string, std::string>, std::map<std::string, long>> table_;
};

struct ReinflectionResult {
  std::vector<Sentence> sentences;  // best first
  std::size_t misses = 0;           // positions that fell back to the lemma
};

/// Up to `k` candidates per position, combined best-first by the product of
/// per-position relative counts and capped at `cap` sentences. Unknown pairs
/// emit the lemma itself.
ReinflectionResult reinflect(const ReinflectionDictionary& dict, const Sentence& lemmas,
                             const Sentence& factors, std::size_t k, std::size_t cap = 1000);

/// Rejoins BPE-segmented lemmas ("@@" continuation); each word takes the
/// factors of its final piece.
std::pair<Sentence, Sentence> join_factored_pieces(const Sentence& lemma_pieces,
                                                   const Sentence& factor_pieces);

}  // namespace knmt
