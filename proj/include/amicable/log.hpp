#pragma once

// Minimal stderr logger. Verbosity comes from AMICABLE_LOG:
//   quiet (or 0)  errors only
//   info  (or 1)  progress, the default
//   debug (or 2)  per-iteration detail

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>

namespace amicable::log {

enum class Level { quiet = 0, info = 1, debug = 2 };

inline Level parse_level(std::string_view s) {
  if (s == "quiet" || s == "0" || s == "error") return Level::quiet;
  if (s == "debug" || s == "2") return Level::debug;
  return Level::info;
}

inline Level& current() {
  static Level level = [] {
    const char* env = std::getenv("AMICABLE_LOG");
    return env ? parse_level(env) : Level::info;
  }();
  return level;
}

inline std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

inline void write(Level level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(current())) return;
  std::lock_guard lock(sink_mutex());
  std::cerr << "[amicable] " << msg << '\n';
}

template <typename... Args>
void info(const Args&... args) {
  if (current() < Level::info) return;
  std::ostringstream os;
  (os << ... << args);
  write(Level::info, os.str());
}

template <typename... Args>
void debug(const Args&... args) {
  if (current() < Level::debug) return;
  std::ostringstream os;
  (os << ... << args);
  write(Level::debug, os.str());
}

inline void error(const std::string& msg) {
  std::lock_guard lock(sink_mutex());
  std::cerr << "amicable: error: " << msg << '\n';
}

}  // namespace amicable::log
