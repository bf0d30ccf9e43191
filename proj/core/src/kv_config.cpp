// SPDX-License-Identifier: Apache-2.0
#include "snri/kv_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "snri/tensor.hpp"

namespace snri {

namespace {

std::string trim(const std::string& s) {
  auto b = std::find_if_not(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
  auto e = std::find_if_not(s.rbegin(), s.rend(), [](unsigned char c) { return std::isspace(c); }).base();
  return b < e ? std::string(b, e) : std::string();
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
  KeyValues kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(fmt::format("{}:{}: expected 'key = value', got '{}'", origin, lineno, line));
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(fmt::format("{}:{}: empty key", origin, lineno));
    kv.values_[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open config file '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string KeyValues::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error(fmt::format("{}: missing key '{}'", origin_, key));
  return it->second;
}

std::int64_t KeyValues::get_int(const std::string& key) const {
  const std::string s = get_string(key);
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(fmt::format("{}: '{}' is not an integer ({})", origin_, key, s));
  }
  return v;
}

std::uint64_t KeyValues::get_uint(const std::string& key) const {
  const std::string s = get_string(key);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(fmt::format("{}: '{}' is not a non-negative integer ({})", origin_, key, s));
  }
  return v;
}

double KeyValues::get_double(const std::string& key) const {
  const std::string s = get_string(key);
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(fmt::format("{}: '{}' is not a number ({})", origin_, key, s));
  }
}

bool KeyValues::get_bool(const std::string& key) const {
  const std::string s = get_string(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw Error(fmt::format("{}: '{}' is not a boolean ({})", origin_, key, s));
}

}  // namespace snri
