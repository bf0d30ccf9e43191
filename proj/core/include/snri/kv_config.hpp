// SPDX-License-Identifier: Apache-2.0
// "key = value" text blocks with '#' comments, used for config files and the
// model-config block stored in checkpoints.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace snri {

class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "<text>");
  static KeyValues load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

}  // namespace snri
