#include "knmt/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace knmt {

namespace {

LogLevel from_env() {
  const char* v = std::getenv("KNMT_LOG");
  if (!v) return LogLevel::info;
  const std::string s(v);
  if (s == "debug") return LogLevel::debug;
  if (s == "quiet" || s == "off") return LogLevel::quiet;
  return LogLevel::info;
}

std::atomic<int>& level_storage() {
  static std::atomic<int> level{static_cast<int>(from_env())};
  return level;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_storage().load()); }

void set_log_level(LogLevel level) { level_storage().store(static_cast<int>(level)); }

void log_line(LogLevel level, const std::string& message) {
  std::lock_guard lock(sink_mutex());
  std::cerr << (level == LogLevel::debug ? "[debug] " : "[info] ") << message << '\n';
}

}  // namespace knmt
