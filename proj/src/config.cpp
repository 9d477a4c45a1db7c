#include "knmt/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <set>

#include "knmt/error.hpp"

namespace knmt {

std::size_t parse_count(const std::string& key, const std::string& value, bool allow_zero) {
  std::size_t used = 0;
  long long v = -1;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || v < 0 || (!allow_zero && v == 0)) {
    throw ConfigError(key + ": expected a " + (allow_zero ? "non-negative" : "positive") +
                      " integer, got '" + value + "'");
  }
  return static_cast<std::size_t>(v);
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty()) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key + ": expected true|false, got '" + value + "'");
}

std::string format_real(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

}  // namespace

std::vector<ConfigEntry> read_config(std::istream& in, const std::string& origin) {
  std::vector<ConfigEntry> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    ConfigEntry e{trim(body.substr(0, eq)), trim(body.substr(eq + 1)), lineno};
    if (e.key.empty()) throw ConfigError(where + ": empty key");
    if (!seen.insert(e.key).second) throw ConfigError(where + ": repeated key '" + e.key + "'");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ConfigEntry> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  return read_config(in, path);
}

}  // namespace knmt
