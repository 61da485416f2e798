#pragma once

#include <string_view>

namespace oner {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// Level comes from ONER_LOG (error|info|debug), read once; default error.
LogLevel log_level();

void log_error(std::string_view msg);
void log_info(std::string_view msg);
void log_debug(std::string_view msg);

}  // namespace oner
