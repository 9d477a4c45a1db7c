#pragma once

// stderr logging gated by KNMT_LOG={quiet,info,debug} (default info).

#include <sstream>
#include <string>

namespace knmt {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

LogLevel log_level();
void set_log_level(LogLevel level);
void log_line(LogLevel level, const std::string& message);

template <typename... Args>
void log_info(const Args&... args) {
  if (log_level() < LogLevel::info) return;
  std::ostringstream os;
  (os << ... << args);
  log_line(LogLevel::info, os.str());
}

template <typename... Args>
void log_debug(const Args&... args) {
  if (log_level() < LogLevel::debug) return;
  std::ostringstream os;
  (os << ... << args);
  log_line(LogLevel::debug, os.str());
}

}  // namespace knmt
