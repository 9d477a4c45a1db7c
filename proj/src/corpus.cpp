#include "knmt/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "knmt/bpe.hpp"
#include "knmt/error.hpp"
#include "knmt/log.hpp"
#include "knmt/rng.hpp"

namespace knmt {

void ParallelCorpus::add(Sentence src, Sentence tgt, int weight) {
  if (factored()) throw ContractError("add: corpus is factored");
  source.push_back(std::move(src));
  target.push_back(std::move(tgt));
  weights.push_back(weight);
}

void ParallelCorpus::add_factored(Sentence src, Sentence lemmas, Sentence tags, int weight) {
  if (!empty() && !factored()) throw ContractError("add_factored: corpus is not factored");
  if (lemmas.size() != tags.size()) {
    throw ContractError("add_factored: " + std::to_string(lemmas.size()) + " lemmas vs " +
                        std::to_string(tags.size()) + " factors");
  }
  source.push_back(std::move(src));
  target.push_back(std::move(lemmas));
  factors.push_back(std::move(tags));
  weights.push_back(weight);
}

void ParallelCorpus::append(const ParallelCorpus& other) {
  if (!empty() && !other.empty() && factored() != other.factored()) {
    throw ContractError("append: mixing factored and word corpora");
  }
  source.insert(source.end(), other.source.begin(), other.source.end());
  target.insert(target.end(), other.target.begin(), other.target.end());
  factors.insert(factors.end(), other.factors.begin(), other.factors.end());
  weights.insert(weights.end(), other.weights.begin(), other.weights.end());
}

void ParallelCorpus::validate() const {
  if (target.size() != source.size() || weights.size() != source.size()) {
    throw ContractError("corpus has " + std::to_string(source.size()) + " source, " +
                        std::to_string(target.size()) + " target lines and " +
                        std::to_string(weights.size()) + " weights");
  }
  if (factored()) {
    if (factors.size() != target.size()) throw ContractError("corpus factor stream misaligned");
    for (std::size_t i = 0; i < target.size(); ++i) {
      if (factors[i].size() != target[i].size()) {
        throw ContractError("segment " + std::to_string(i) + ": lemma/factor length mismatch");
      }
    }
  }
  for (const int w : weights) {
    if (w < 1) throw ContractError("corpus weight " + std::to_string(w) + " < 1");
  }
}

std::vector<Sentence> read_sentences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read '" + path + "'");
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(split_words(line));
  return out;
}

void write_sentences(const std::string& path, const std::vector<Sentence>& sentences) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  for (const auto& s : sentences) out << join_words(s) << '\n';
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

void check_aligned(const std::string& a, std::size_t na, const std::string& b, std::size_t nb) {
  if (na != nb) {
    throw LoadError("'" + a + "' has " + std::to_string(na) + " lines but '" + b + "' has " +
                    std::to_string(nb));
  }
}

}  // namespace

ParallelCorpus read_parallel(const std::string& src_path, const std::string& tgt_path,
                             int weight) {
  auto src = read_sentences(src_path);
  auto tgt = read_sentences(tgt_path);
  check_aligned(src_path, src.size(), tgt_path, tgt.size());
  ParallelCorpus c;
  for (std::size_t i = 0; i < src.size(); ++i) c.add(std::move(src[i]), std::move(tgt[i]), weight);
  return c;
}

ParallelCorpus read_factored(const std::string& src_path, const std::string& tgt_path,
                             int weight) {
  auto src = read_sentences(src_path);
  const auto tgt = read_lines(tgt_path);
  check_aligned(src_path, src.size(), tgt_path, tgt.size());
  ParallelCorpus c;
  for (std::size_t i = 0; i < src.size(); ++i) {
    Sentence lemmas, tags;
    for (auto& tok : parse_factored(tgt[i])) {
      lemmas.push_back(std::move(tok.lemma));
      tags.push_back(std::move(tok.factors));
    }
    c.add_factored(std::move(src[i]), std::move(lemmas), std::move(tags), weight);
  }
  return c;
}

ParallelCorpus read_manifest(const std::string& manifest_path, const std::string& src_ext,
                             const std::string& tgt_ext, bool factored) {
  const auto base = std::filesystem::path(manifest_path).parent_path();
  ParallelCorpus out;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(manifest_path)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw LoadError(manifest_path + ":" + std::to_string(lineno) + ": expected 'path<TAB>weight'");
    }
    std::filesystem::path prefix(line.substr(0, tab));
    if (prefix.is_relative()) prefix = base / prefix;
    int weight = 0;
    try {
      std::size_t used = 0;
      weight = std::stoi(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) weight = 0;
    } catch (const std::exception&) {
      weight = 0;
    }
    if (weight < 1) {
      throw LoadError(manifest_path + ":" + std::to_string(lineno) + ": weight must be an integer >= 1");
    }
    const std::string p = prefix.string();
    out.append(factored ? read_factored(p + "." + src_ext, p + "." + tgt_ext, weight)
                        : read_parallel(p + "." + src_ext, p + "." + tgt_ext, weight));
  }
  return out;
}

ParallelCorpus filter_corpus(const ParallelCorpus& corpus, std::size_t min_len,
                             std::size_t max_len, std::optional<double> max_ratio) {
  if (min_len < 1 || min_len > max_len) {
    throw ContractError("filter_corpus: need 1 <= min_len <= max_len");
  }
  ParallelCorpus out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::size_t s = corpus.source[i].size(), t = corpus.target[i].size();
    if (s < min_len || s > max_len || t < min_len || t > max_len) continue;
    if (max_ratio) {
      const double r = static_cast<double>(std::max(s, t)) / static_cast<double>(std::min(s, t));
      if (r > *max_ratio) continue;
    }
    out.source.push_back(corpus.source[i]);
    out.target.push_back(corpus.target[i]);
    if (corpus.factored()) out.factors.push_back(corpus.factors[i]);
    out.weights.push_back(corpus.weights[i]);
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(const ParallelCorpus& corpus,
                                                   std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw ContractError("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (int k = 0; k < corpus.weights[i]; ++k) order.push_back(i);
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());

  std::vector<std::vector<std::size_t>> batches;
  if (batch_size == 1) {
    for (const auto i : order) batches.push_back({i});
    return batches;
  }
  const std::size_t pool = batch_size * 20;
  for (std::size_t start = 0; start < order.size(); start += pool) {
    const std::size_t end = std::min(order.size(), start + pool);
    const auto at = [&](std::size_t k) { return order.begin() + static_cast<std::ptrdiff_t>(k); };
    std::stable_sort(at(start), at(end), [&](std::size_t a, std::size_t b) {
      return std::pair(corpus.target[a].size(), corpus.source[a].size()) <
             std::pair(corpus.target[b].size(), corpus.source[b].size());
    });
    for (std::size_t b = start; b < end; b += batch_size) {
      batches.emplace_back(at(b), at(std::min(end, b + batch_size)));
    }
  }
  rng.shuffle(batches.begin(), batches.end());
  return batches;
}

BacktranslationResult assemble_bt_corpus(const ParallelCorpus& original,
                                         const std::vector<Sentence>& mono_target,
                                         const ReverseTranslator& translate, std::size_t limit) {
  if (original.factored()) throw ContractError("assemble_bt_corpus: word corpora only");
  BacktranslationResult r;
  r.corpus = original;
  const std::size_t n = std::min(limit, mono_target.size());
  for (std::size_t i = 0; i < n; ++i) {
    Sentence synthetic;
    try {
      synthetic = translate(mono_target[i]);
    } catch (const std::exception& e) {
      log_debug("back-translation of line ", i + 1, " failed: ", e.what());
    }
    if (synthetic.empty()) {
      ++r.skipped;
      continue;
    }
    r.corpus.add(std::move(synthetic), mono_target[i], 1);
  }
  if (r.skipped) log_info("back-translation skipped ", r.skipped, " of ", n, " sentences");
  return r;
}

}  // namespace knmt
