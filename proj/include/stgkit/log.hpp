#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace stgkit {

enum class LogLevel { silent = 0, info = 1, debug = 2 };

// Verbosity comes from STGKIT_LOG ("info" or "debug"); unset means silent.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("STGKIT_LOG");
    if (env == nullptr) return LogLevel::silent;
    if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
    if (std::strcmp(env, "info") == 0) return LogLevel::info;
    return LogLevel::silent;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::info) std::fprintf(stderr, "[stgkit] %s\n", msg.c_str());
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::debug) std::fprintf(stderr, "[stgkit] %s\n", msg.c_str());
}

}  // namespace stgkit
