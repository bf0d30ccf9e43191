// SPDX-License-Identifier: Apache-2.0
#include "snri/log.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>

namespace snri::log {

namespace {
std::atomic<Level> g_level{Level::kInfo};
std::mutex g_mutex;

void emit(Level lvl, const char* tag, std::string_view msg) {
  if (lvl < g_level.load()) return;
  std::lock_guard lock(g_mutex);
  std::fprintf(stderr, "[%s] %.*s\n", tag, static_cast<int>(msg.size()), msg.data());
}
}  // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

void debug(std::string_view msg) { emit(Level::kDebug, "debug", msg); }
void info(std::string_view msg) { emit(Level::kInfo, "info", msg); }
void warn(std::string_view msg) { emit(Level::kWarn, "warn", msg); }
void error(std::string_view msg) { emit(Level::kError, "error", msg); }

}  // namespace snri::log
