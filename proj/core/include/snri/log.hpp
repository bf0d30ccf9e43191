// SPDX-License-Identifier: Apache-2.0
// Minimal leveled logging to stderr.
#pragma once

#include <string_view>

namespace snri::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

void set_level(Level level);
Level level();

void debug(std::string_view msg);
void info(std::string_view msg);
void warn(std::string_view msg);
void error(std::string_view msg);

}  // namespace snri::log
