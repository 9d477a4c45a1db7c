#pragma once

// "key = value" configuration text and typed value parsing.

#include <iosfwd>
#include <string>
#include <vector>

namespace knmt {

/// ConfigError naming `key` on malformed values.
std::size_t parse_count(const std::string& key, const std::string& value, bool allow_zero);
double parse_real(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

/// Shortest text that parses back to the same double.
std::string format_real(double v);

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Blank lines and '#' comments are skipped; ConfigError on lines without
/// '=' or with an empty key, and on repeated keys.
std::vector<ConfigEntry> read_config(std::istream& in, const std::string& origin);
std::vector<ConfigEntry> read_config(const std::string& path);

}  // namespace knmt
