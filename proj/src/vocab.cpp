#include "knmt/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "knmt/error.hpp"

namespace knmt {

Sentence split_words(const std::string& line) {
  Sentence out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(true) {}

Vocabulary::Vocabulary(bool reserved) : reserved_(reserved) {
  if (reserved) {
    for (const char* t : {"<pad>", "</s>", "<unk>", "<s>"}) add(t);
  }
}

Vocabulary Vocabulary::plain() { return Vocabulary(false); }

Vocabulary Vocabulary::build(std::span<const std::vector<Sentence>* const> corpora,
                             bool reserved) {
  std::map<std::string, long> counts;
  for (const auto* corpus : corpora)
    for (const auto& s : *corpus)
      for (const auto& w : s) ++counts[w];
  std::vector<std::pair<std::string, long>> items(counts.begin(), counts.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v(reserved);
  for (const auto& [tok, n] : items) v.add(tok);
  return v;
}

Vocabulary Vocabulary::build(const std::vector<Sentence>& corpus, bool reserved) {
  const std::vector<Sentence>* one[] = {&corpus};
  return build(one, reserved);
}

int Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  if (reserved_) return kUnk;
  throw VocabularyError("unknown token '" + token + "'");
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw VocabularyError("id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const Sentence& words, bool append_eos) const {
  std::vector<int> ids;
  ids.reserve(words.size() + 1);
  for (const auto& w : words) ids.push_back(id(w));
  if (append_eos) {
    if (!reserved_) throw VocabularyError("plain vocabulary has no end-of-sentence entry");
    ids.push_back(kEos);
  }
  return ids;
}

Sentence Vocabulary::decode(std::span<const int> ids) const {
  Sentence out;
  for (const int i : ids) {
    if (reserved_) {
      if (i == kEos) break;
      if (i == kPad || i == kBos) continue;
    }
    out.push_back(token(i));
  }
  return out;
}

void Vocabulary::save(std::ostream& out) const {
  out << (reserved_ ? "reserved" : "plain") << ' ' << tokens_.size() << '\n';
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::string kind;
  std::size_t n = 0;
  if (!(in >> kind >> n) || (kind != "reserved" && kind != "plain")) {
    throw LoadError("vocabulary: malformed header");
  }
  in.ignore(1);
  Vocabulary v(false);
  v.reserved_ = kind == "reserved";
  for (std::size_t i = 0; i < n; ++i) {
    std::string t;
    if (!std::getline(in, t)) throw LoadError("vocabulary: truncated token list");
    if (v.add(t) != static_cast<int>(i)) throw LoadError("vocabulary: duplicate token '" + t + "'");
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write vocabulary '" + path + "'");
  save(out);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read vocabulary '" + path + "'");
  return load(in);
}

}  // namespace knmt
