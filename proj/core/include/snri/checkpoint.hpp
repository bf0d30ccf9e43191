// SPDX-License-Identifier: Apache-2.0
/**
 * @file   checkpoint.hpp
 * @brief  Versioned binary checkpoint: parameters, Adam state, config block.
 *
 * Byte layout is documented in docs/formats.md. All integers and doubles are
 * little-endian regardless of host byte order.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "snri/adam.hpp"
#include "snri/params.hpp"

namespace snri {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParamStore params;
  std::optional<AdamState> adam;
  /// Canonical key=value text of the model config.
  std::string config_text;
};

/// FNV-1a 64-bit hash.
std::uint64_t fnv1a64(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws snri::Error on missing file, bad magic, unsupported version,
/// truncation, or a config block whose hash does not match.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace snri
