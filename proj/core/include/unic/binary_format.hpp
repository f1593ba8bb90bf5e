#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace unic {

// Shared container for episodes and checkpoints:
//   "UNIC" | u32 LE version | u64 LE header length | UTF-8 JSON header | LE tensor block
// The header's "dtype" ("f32" or "f64") gives the element width of the tensor block.
inline constexpr char kMagic[4] = {'U', 'N', 'I', 'C'};
inline constexpr std::uint32_t kFormatVersion = 1;

struct Container {
  nlohmann::json header;
  std::vector<double> tensors;  // widened from f32 when stored that way
};

std::vector<std::uint8_t> encode_container(nlohmann::json header, std::span<const float> tensors);
std::vector<std::uint8_t> encode_container(nlohmann::json header, std::span<const double> tensors);

/// `what` names the file type in error messages ("episode", "checkpoint").
/// The element count `expected_floats` is derived from the header by the caller-supplied
/// function so truncation is detected before reading the tensor block.
Container decode_container(std::span<const std::uint8_t> bytes, const std::string& what,
                           std::size_t (*expected_floats)(const nlohmann::json&));

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace unic
