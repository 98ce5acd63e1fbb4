#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "cddm/config.hpp"
#include "cddm/model.hpp"

namespace cddm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::string role = "pretrained";  // pretrained | teacher | student
  std::size_t iteration = 0;
  Json provenance = Json::object();  // command, seed, config_hash, mode, ablation flags
};

// Layout: "CDDM", u32 version, u32 header length, JSON header, u32 tensor count, then per
// tensor u32 name length, name, u32 rank, u64 dims, little-endian f32 values; finally a
// u64 FNV-1a checksum of every preceding byte.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_binary_file(const std::filesystem::path& path);

}  // namespace cddm
