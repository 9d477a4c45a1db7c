#pragma once

// Moses-style n-best lists: "index ||| tokens ||| name1= v1 name2= v2 ||| total".

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "knmt/config.hpp"
#include "knmt/vocab.hpp"

namespace knmt {

struct NBestEntry {
  std::size_t index = 0;
  Sentence tokens;
  std::vector<std::pair<std::string, double>> features;
  double total = 0.0;

  /// Value of the named feature; ContractError if absent.
  double feature(const std::string& name) const;
  bool has_feature(const std::string& name) const;
  void set_feature(const std::string& name, double value);

  bool operator==(const NBestEntry&) const = default;
};

std::string format_nbest_line(const NBestEntry& e);
/// LoadError naming the problem on malformed lines.
NBestEntry parse_nbest_line(const std::string& line);

void write_nbest(std::ostream& out, const std::vector<NBestEntry>& entries);
std::vector<NBestEntry> read_nbest(std::istream& in);
std::vector<NBestEntry> read_nbest(const std::string& path);

/// Groups entries by sentence index; `sentences` fixes the list count
/// (0: one past the largest index). Order within a group is preserved.
std::vector<std::vector<NBestEntry>> group_nbest(const std::vector<NBestEntry>& entries,
                                                 std::size_t sentences = 0);

}  // namespace knmt
