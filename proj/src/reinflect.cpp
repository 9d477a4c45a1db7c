#include "knmt/reinflect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <queue>
#include <set>

#include "knmt/bpe.hpp"
#include "knmt/error.hpp"

namespace knmt {

void ReinflectionDictionary::add(const std::string& lemma, const std::string& factors,
                                 const std::string& word, long count) {
  if (count < 1) throw ContractError("reinflection count must be >= 1");
  table_[{lemma, factors}][word] += count;
}

ReinflectionDictionary ReinflectionDictionary::from_tagged(const std::vector<Sentence>& words,
                                                           const std::vector<Sentence>& tagged) {
  if (words.size() != tagged.size()) {
    throw ContractError("from_tagged: " + std::to_string(words.size()) + " word lines vs " +
                        std::to_string(tagged.size()) + " tagged lines");
  }
  ReinflectionDictionary d;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i].size() != tagged[i].size()) {
      throw ContractError("from_tagged: line " + std::to_string(i + 1) + " is misaligned");
    }
    for (std::size_t j = 0; j < words[i].size(); ++j) {
      const auto tok = parse_factored(tagged[i][j]);
      d.add(tok.front().lemma, tok.front().factors, words[i][j]);
    }
  }
  return d;
}

std::vector<ReinflectionDictionary::Candidate> ReinflectionDictionary::lookup(
    const std::string& lemma, const std::string& factors) const {
  std::vector<Candidate> out;
  const auto it = table_.find({lemma, factors});
  if (it == table_.end()) return out;
  for (const auto& [w, c] : it->second) out.push_back({w, c});
  std::stable_sort(out.begin(), out.end(),
                   [](const Candidate& a, const Candidate& b) { return a.count > b.count; });
  return out;
}

void ReinflectionDictionary::save(std::ostream& out) const {
  for (const auto& [key, words] : table_)
    for (const auto& [w, c] : words) out << key.first << '\t' << key.second << '\t' << w << '\t' << c << '\n';
}

void ReinflectionDictionary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  save(out);
}

ReinflectionDictionary ReinflectionDictionary::load(std::istream& in) {
  ReinflectionDictionary d;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t p; (p = line.find('\t', start)) != std::string::npos; start = p + 1)
      f.push_back(line.substr(start, p - start));
    f.push_back(line.substr(start));
    long count = 0;
    try {
      std::size_t used = 0;
      if (f.size() == 4) count = std::stol(f[3], &used);
      if (used != f[3].size()) count = 0;
    } catch (const std::exception&) {
      count = 0;
    }
    if (f.size() != 4 || count < 1) {
      throw LoadError("reinflection dictionary line " + std::to_string(lineno) +
                      ": expected 'lemma<TAB>factors<TAB>word<TAB>count'");
    }
    d.add(f[0], f[1], f[2], count);
  }
  return d;
}

ReinflectionDictionary ReinflectionDictionary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read '" + path + "'");
  return load(in);
}

ReinflectionResult reinflect(const ReinflectionDictionary& dict, const Sentence& lemmas,
                             const Sentence& factors, std::size_t k, std::size_t cap) {
  if (k < 1) throw ContractError("reinflect: k must be >= 1");
  if (lemmas.size() != factors.size()) {
    throw ContractError("reinflect: " + std::to_string(lemmas.size()) + " lemmas vs " +
                        std::to_string(factors.size()) + " factors");
  }
  ReinflectionResult r;
  const std::size_t n = lemmas.size();
  std::vector<std::vector<std::string>> words(n);
  std::vector<std::vector<double>> logw(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto cands = dict.lookup(lemmas[i], factors[i]);
    if (cands.empty()) {
      ++r.misses;
      words[i] = {lemmas[i]};
      logw[i] = {0.0};
      continue;
    }
    double total = 0;
    for (const auto& c : cands) total += static_cast<double>(c.count);
    cands.resize(std::min(k, cands.size()));
    for (const auto& c : cands) {
      words[i].push_back(c.word);
      logw[i].push_back(std::log(static_cast<double>(c.count) / total));
    }
  }
  if (cap == 0) return r;

  using Ranks = std::vector<std::size_t>;
  struct Item {
    double score;
    Ranks ranks;
  };
  const auto worse = [](const Item& a, const Item& b) {
    return a.score != b.score ? a.score < b.score : a.ranks > b.ranks;
  };
  std::priority_queue<Item, std::vector<Item>, decltype(worse)> heap(worse);
  std::set<Ranks> seen;
  const auto score = [&](const Ranks& rk) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += logw[i][rk[i]];
    return s;
  };
  Ranks first(n, 0);
  heap.push({score(first), first});
  seen.insert(first);
  while (!heap.empty() && r.sentences.size() < cap) {
    Item top = heap.top();
    heap.pop();
    Sentence s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = words[i][top.ranks[i]];
    r.sentences.push_back(std::move(s));
    for (std::size_t i = 0; i < n; ++i) {
      if (top.ranks[i] + 1 >= words[i].size()) continue;
      Ranks next = top.ranks;
      ++next[i];
      if (seen.insert(next).second) heap.push({score(next), std::move(next)});
    }
  }
  return r;
}

std::pair<Sentence, Sentence> join_factored_pieces(const Sentence& lemma_pieces,
                                                   const Sentence& factor_pieces) {
  if (lemma_pieces.size() != factor_pieces.size()) {
    throw ContractError("join_factored_pieces: stream lengths differ");
  }
  Sentence lemmas, factors;
  bool open = false;
  for (std::size_t i = 0; i < lemma_pieces.size(); ++i) {
    std::string piece = lemma_pieces[i];
    const bool cont = piece.ends_with(kContinuation);
    if (cont) piece.resize(piece.size() - std::string_view(kContinuation).size());
    if (open) {
      lemmas.back() += piece;
      factors.back() = factor_pieces[i];
    } else {
      lemmas.push_back(std::move(piece));
      factors.push_back(factor_pieces[i]);
    }
    open = cont;
  }
  return {lemmas, factors};
}

}  // namespace knmt
