#include "knmt/nbest.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "knmt/error.hpp"

namespace knmt {

double NBestEntry::feature(const std::string& name) const {
  for (const auto& [n, v] : features)
    if (n == name) return v;
  throw ContractError("n-best entry has no feature '" + name + "'");
}

bool NBestEntry::has_feature(const std::string& name) const {
  for (const auto& f : features)
    if (f.first == name) return true;
  return false;
}

void NBestEntry::set_feature(const std::string& name, double value) {
  for (auto& [n, v] : features) {
    if (n == name) {
      v = value;
      return;
    }
  }
  features.emplace_back(name, value);
}


namespace {

double parse_field(const std::string& s, const std::string& what) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw LoadError("n-best: bad " + what + " '" + s + "'");
  }
  return v;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto p = line.find("|||", start);
    out.push_back(line.substr(start, p == std::string::npos ? std::string::npos : p - start));
    if (p == std::string::npos) return out;
    start = p + 3;
  }
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t") - a + 1);
}

}  // namespace

std::string format_nbest_line(const NBestEntry& e) {
  std::string out = std::to_string(e.index) + " ||| " + join_words(e.tokens) + " |||";
  for (const auto& [n, v] : e.features) out += " " + n + "= " + format_real(v);
  out += " ||| " + format_real(e.total);
  return out;
}

NBestEntry parse_nbest_line(const std::string& line) {
  const auto fields = split_fields(line);
  if (fields.size() != 4) {
    throw LoadError("n-best: expected 4 '|||'-separated fields, got " +
                    std::to_string(fields.size()));
  }
  NBestEntry e;
  const auto idx = trim(fields[0]);
  std::size_t used = 0;
  const auto r = std::from_chars(idx.data(), idx.data() + idx.size(), e.index);
  used = static_cast<std::size_t>(r.ptr - idx.data());
  if (r.ec != std::errc() || used != idx.size()) throw LoadError("n-best: bad index '" + idx + "'");
  e.tokens = split_words(fields[1]);
  const auto feats = split_words(fields[2]);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const auto& name = feats[i];
    if (name.size() < 2 || name.back() != '=') {
      throw LoadError("n-best: expected 'name=' but found '" + name + "'");
    }
    if (i + 1 >= feats.size()) throw LoadError("n-best: feature '" + name + "' has no value");
    e.features.emplace_back(name.substr(0, name.size() - 1), parse_field(feats[++i], "feature value"));
  }
  e.total = parse_field(trim(fields[3]), "total");
  return e;
}

void write_nbest(std::ostream& out, const std::vector<NBestEntry>& entries) {
  for (const auto& e : entries) out << format_nbest_line(e) << '\n';
}

std::vector<NBestEntry> read_nbest(std::istream& in) {
  std::vector<NBestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse_nbest_line(line));
    } catch (const LoadError& e) {
      throw LoadError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<NBestEntry> read_nbest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read '" + path + "'");
  try {
    return read_nbest(in);
  } catch (const LoadError& e) {
    throw LoadError(path + ": " + e.what());
  }
}

std::vector<std::vector<NBestEntry>> group_nbest(const std::vector<NBestEntry>& entries,
                                                 std::size_t sentences) {
  for (const auto& e : entries) sentences = std::max(sentences, e.index + 1);
  std::vector<std::vector<NBestEntry>> out(sentences);
  for (const auto& e : entries) out[e.index].push_back(e);
  return out;
}

}  // namespace knmt
