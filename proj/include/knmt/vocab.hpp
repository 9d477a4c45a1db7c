#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace knmt {

using Sentence = std::vector<std::string>;

/// Splits on runs of spaces/tabs.
Sentence split_words(const std::string& line);
std::string join_words(std::span<const std::string> words);

/// Bidirectional token↔id table.
///
/// A reserved vocabulary starts with <pad>=0, </s>=1, <unk>=2, <s>=3 and maps
/// unseen tokens to <unk>. A plain vocabulary (factor tags) has no reserved
/// entries and rejects unseen tokens.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;
  static constexpr int kBos = 3;
  static constexpr int kNumReserved = 4;

  Vocabulary();
  static Vocabulary plain();

  /// Tokens ordered by descending frequency, ties lexicographic.
  static Vocabulary build(std::span<const std::vector<Sentence>* const> corpora,
                          bool reserved = true);
  static Vocabulary build(const std::vector<Sentence>& corpus, bool reserved = true);

  int add(const std::string& token);
  /// <unk> for unseen tokens (reserved vocabularies); VocabularyError otherwise.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  bool reserved() const { return reserved_; }

  std::vector<int> encode(const Sentence& words, bool append_eos) const;
  /// Stops at the first </s>; drops <pad> and <s>.
  Sentence decode(std::span<const int> ids) const;

  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const {
    return reserved_ == other.reserved_ && tokens_ == other.tokens_;
  }

 private:
  explicit Vocabulary(bool reserved);

  bool reserved_ = true;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace knmt
