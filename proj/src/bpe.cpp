#include "knmt/bpe.hpp"

#include <fstream>
#include <limits>
#include <set>

#include "knmt/error.hpp"

namespace knmt {

namespace {

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte: treat as its own symbol
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

using Merge = SubwordModel::Merge;

}  // namespace

std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < word.size();) {
    const std::size_t n = std::min(utf8_length(static_cast<unsigned char>(word[i])), word.size() - i);
    out.push_back(word.substr(i, n));
    i += n;
  }
  if (!out.empty()) out.back() += kEndOfWord;
  return out;
}

SubwordModel::SubwordModel(std::vector<Merge> merges) : merges_(std::move(merges)) {
  for (std::size_t i = 0; i < merges_.size(); ++i) rank_.emplace(merges_[i], i);
}

SubwordModel SubwordModel::learn(const std::vector<Sentence>& corpus, std::size_t num_merges,
                                 long min_frequency) {
  const std::vector<Sentence>* one[] = {&corpus};
  return learn(one, num_merges, min_frequency);
}

SubwordModel SubwordModel::learn(std::span<const std::vector<Sentence>* const> corpora,
                                 std::size_t num_merges, long min_frequency) {
  std::map<std::string, long> word_counts;
  for (const auto* corpus : corpora)
    for (const auto& sentence : *corpus)
      for (const auto& w : sentence) ++word_counts[w];
  if (word_counts.empty()) throw ContractError("bpe_learn: empty corpus");

  struct Word {
    std::vector<std::string> symbols;
    long freq;
  };
  std::vector<Word> words;
  for (const auto& [w, n] : word_counts) words.push_back({word_symbols(w), n});

  std::map<Merge, long> counts;
  std::map<Merge, std::set<std::size_t>> where;
  auto add_pairs = [&](std::size_t idx, long sign) {
    const auto& sy = words[idx].symbols;
    for (std::size_t i = 0; i + 1 < sy.size(); ++i) {
      Merge p{sy[i], sy[i + 1]};
      auto it = counts.find(p);
      if (it == counts.end()) it = counts.emplace(p, 0).first;
      it->second += sign * words[idx].freq;
      if (it->second == 0) counts.erase(it);
      if (sign > 0) where[p].insert(idx);
    }
  };
  for (std::size_t i = 0; i < words.size(); ++i) add_pairs(i, +1);

  std::vector<Merge> merges;
  while (merges.size() < num_merges) {
    // Map order makes the first maximum the lexicographically smallest pair.
    auto best = counts.end();
    for (auto it = counts.begin(); it != counts.end(); ++it)
      if (best == counts.end() || it->second > best->second) best = it;
    if (best == counts.end() || best->second < min_frequency) break;
    const Merge pair = best->first;
    merges.push_back(pair);
    const std::string joined = pair.first + pair.second;
    const auto affected = where[pair];
    for (const std::size_t idx : affected) {
      auto& sy = words[idx].symbols;
      bool present = false;
      for (std::size_t i = 0; i + 1 < sy.size(); ++i)
        if (sy[i] == pair.first && sy[i + 1] == pair.second) present = true;
      if (!present) continue;
      add_pairs(idx, -1);
      std::vector<std::string> merged;
      for (std::size_t i = 0; i < sy.size();) {
        if (i + 1 < sy.size() && sy[i] == pair.first && sy[i + 1] == pair.second) {
          merged.push_back(joined);
          i += 2;
        } else {
          merged.push_back(sy[i]);
          ++i;
        }
      }
      sy = std::move(merged);
      add_pairs(idx, +1);
    }
    where.erase(pair);
  }
  return SubwordModel(std::move(merges));
}

std::vector<std::string> SubwordModel::merge_symbols(const std::string& word) const {
  auto sy = word_symbols(word);
  while (sy.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i + 1 < sy.size(); ++i) {
      auto it = rank_.find(Merge{sy[i], sy[i + 1]});
      if (it != rank_.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    const Merge& m = merges_[best_rank];
    std::vector<std::string> next;
    next.reserve(sy.size());
    for (std::size_t i = 0; i < sy.size();) {
      if (i + 1 < sy.size() && sy[i] == m.first && sy[i + 1] == m.second) {
        next.push_back(m.first + m.second);
        i += 2;
      } else {
        next.push_back(sy[i]);
        ++i;
      }
    }
    sy = std::move(next);
  }
  return sy;
}

std::vector<std::string> SubwordModel::segment_word(const std::string& word) const {
  auto sy = merge_symbols(word);
  if (!sy.empty()) {
    auto& last = sy.back();
    last.erase(last.size() - std::string(kEndOfWord).size());
  }
  return sy;
}

Sentence SubwordModel::apply(const Sentence& sentence) const {
  Sentence out;
  for (const auto& w : sentence) {
    auto pieces = segment_word(w);
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      out.push_back(i + 1 < pieces.size() ? pieces[i] + kContinuation : pieces[i]);
    }
  }
  return out;
}

void SubwordModel::save(std::ostream& out) const {
  out << "#bpe v1\n";
  for (const auto& [l, r] : merges_) out << l << ' ' << r << '\n';
}

SubwordModel SubwordModel::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "#bpe v1") {
    throw LoadError("bpe model: expected '#bpe v1' header");
  }
  std::vector<Merge> merges;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto parts = split_words(line);
    if (parts.size() != 2) {
      throw LoadError("bpe model: line " + std::to_string(lineno) + " is not 'left right'");
    }
    merges.emplace_back(parts[0], parts[1]);
  }
  return SubwordModel(std::move(merges));
}

void SubwordModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write bpe model '" + path + "'");
  save(out);
}

SubwordModel SubwordModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read bpe model '" + path + "'");
  return load(in);
}

DetokenizeResult detokenize_bpe(std::span<const std::string> pieces) {
  DetokenizeResult r;
  std::string current;
  bool open = false;
  const std::string marker = kContinuation;
  for (const auto& p : pieces) {
    if (ends_with(p, marker)) {
      current += p.substr(0, p.size() - marker.size());
      open = true;
    } else {
      current += p;
      r.words.push_back(std::move(current));
      current.clear();
      open = false;
    }
  }
  if (open) {
    r.words.push_back(std::move(current));
    r.dangling = true;
  }
  return r;
}

std::string escape_lemma(const std::string& lemma) {
  std::string out;
  for (const char c : lemma) {
    if (c == '|') {
      out += "\\p";
    } else if (c == '\\') {
      out += "\\\\";
    } else {
      out += c;
    }
  }
  return out;
}

FactoredSentence parse_factored(const std::string& line) {
  FactoredSentence out;
  for (const auto& tok : split_words(line)) {
    const auto bar = tok.find('|');
    if (bar == std::string::npos) {
      throw LoadError("factored token '" + tok + "' has no '|' separator");
    }
    FactoredToken ft;
    const std::string raw = tok.substr(0, bar);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '\\' && i + 1 < raw.size()) {
        ft.lemma += raw[i + 1] == 'p' ? '|' : raw[i + 1];
        ++i;
      } else {
        ft.lemma += raw[i];
      }
    }
    ft.factors = tok.substr(bar + 1);
    if (ft.lemma.empty()) throw LoadError("factored token '" + tok + "' has an empty lemma");
    out.push_back(std::move(ft));
  }
  return out;
}

std::string format_factored(const FactoredSentence& sentence) {
  std::string out;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (i) out += ' ';
    out += escape_lemma(sentence[i].lemma) + '|' + sentence[i].factors;
  }
  return out;
}

FactoredStreams factored_bpe_apply(const SubwordModel& model, const Sentence& lemmas,
                                   const Sentence& factors) {
  if (lemmas.size() != factors.size()) {
    throw ContractError("factored_bpe_apply: " + std::to_string(lemmas.size()) + " lemmas vs " +
                        std::to_string(factors.size()) + " factors");
  }
  FactoredStreams out;
  for (std::size_t i = 0; i < lemmas.size(); ++i) {
    auto pieces = model.segment_word(lemmas[i]);
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      out.lemmas.push_back(k + 1 < pieces.size() ? pieces[k] + kContinuation : pieces[k]);
      out.factors.push_back(factors[i]);
    }
  }
  return out;
}

FactoredStreams factored_bpe_apply(const SubwordModel& model, const FactoredSentence& sentence) {
  Sentence lemmas, factors;
  for (const auto& t : sentence) {
    lemmas.push_back(t.lemma);
    factors.push_back(t.factors);
  }
  return factored_bpe_apply(model, lemmas, factors);
}

}  // namespace knmt
