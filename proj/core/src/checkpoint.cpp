// SPDX-License-Identifier: Apache-2.0
#include "snri/checkpoint.hpp"

#include <fstream>

#include <fmt/format.h>

#include "snri/binary_io.hpp"

namespace snri {

namespace {

constexpr char kMagic[8] = {'S', 'N', 'R', 'I', 'C', 'K', 'P', 'T'};

void write_store(std::ostream& out, const ParamStore& store) {
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store) {
    io::write_string(out, name);
    io::write_tensor(out, t);
  }
}

ParamStore read_store(std::istream& in) {
  ParamStore store;
  const auto n = io::read_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = io::read_string(in);
    store.add(name, io::read_tensor(in));
  }
  return store;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write checkpoint '{}'", path.string()));
  out.write(kMagic, sizeof(kMagic));
  io::write_le<std::uint32_t>(out, kCheckpointVersion);
  io::write_le<std::uint64_t>(out, fnv1a64(ckpt.config_text));
  io::write_string(out, ckpt.config_text);
  write_store(out, ckpt.params);
  io::write_le<std::uint8_t>(out, ckpt.adam ? 1 : 0);
  if (ckpt.adam) {
    const AdamState& a = *ckpt.adam;
    io::write_le<std::uint64_t>(out, a.step);
    io::write_le<double>(out, a.lr);
    io::write_le<double>(out, a.beta1);
    io::write_le<double>(out, a.beta2);
    io::write_le<double>(out, a.eps);
    write_store(out, a.m);
    write_store(out, a.v);
  }
  if (!out) throw Error(fmt::format("failed writing checkpoint '{}'", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("checkpoint not found: '{}'", path.string()));
  try {
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::string_view(magic, 8) != std::string_view(kMagic, 8)) {
      throw Error("bad magic");
    }
    const auto version = io::read_le<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
      throw Error(fmt::format("unsupported version {}", version));
    }
    const auto hash = io::read_le<std::uint64_t>(in);
    Checkpoint ckpt;
    ckpt.config_text = io::read_string(in);
    if (fnv1a64(ckpt.config_text) != hash) throw Error("config hash mismatch");
    ckpt.params = read_store(in);
    if (io::read_le<std::uint8_t>(in)) {
      AdamState a;
      a.step = io::read_le<std::uint64_t>(in);
      a.lr = io::read_le<double>(in);
      a.beta1 = io::read_le<double>(in);
      a.beta2 = io::read_le<double>(in);
      a.eps = io::read_le<double>(in);
      a.m = read_store(in);
      a.v = read_store(in);
      ckpt.adam = std::move(a);
    }
    return ckpt;
  } catch (const Error& e) {
    throw Error(fmt::format("invalid checkpoint '{}': {}", path.string(), e.what()));
  }
}

}  // namespace snri
