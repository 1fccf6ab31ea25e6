#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace dualsrc {

// Binary container shared by parameter and checkpoint files:
//   4-byte magic, u32 little-endian header length, JSON header text,
//   u64 little-endian double count, raw little-endian doubles.
struct Blob {
  nlohmann::json header;
  std::vector<double> data;
};

void write_blob(const std::filesystem::path& path, const char magic[4],
                const nlohmann::json& header, std::span<const double> data);
Blob read_blob(const std::filesystem::path& path, const char magic[4]);

}  // namespace dualsrc
