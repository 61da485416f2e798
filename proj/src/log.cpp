#include "oner/log.hpp"

#include <cstdlib>
#include <iostream>
#include <string>

namespace oner {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("ONER_LOG");
    if (env == nullptr) return LogLevel::kError;
    const std::string v(env);
    if (v == "debug") return LogLevel::kDebug;
    if (v == "info") return LogLevel::kInfo;
    return LogLevel::kError;
  }();
  return level;
}

void log_error(std::string_view msg) {
  std::cerr << "[error] " << msg << "\n";
}

void log_info(std::string_view msg) {
  if (log_level() >= LogLevel::kInfo) std::cerr << "[info] " << msg << "\n";
}

void log_debug(std::string_view msg) {
  if (log_level() >= LogLevel::kDebug) std::cerr << "[debug] " << msg << "\n";
}

}  // namespace oner
