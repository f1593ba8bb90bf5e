#include "unic/binary_format.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "unic/error.hpp"

namespace unic {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t at) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[at + i]) << (8 * i);
  return value;
}

std::vector<std::uint8_t> encode_prefix(const nlohmann::json& header, std::size_t tensor_bytes) {
  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(16 + text.size() + tensor_bytes);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_container(nlohmann::json header, std::span<const float> tensors) {
  header["dtype"] = "f32";
  auto out = encode_prefix(header, 4 * tensors.size());
  for (float f : tensors) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

std::vector<std::uint8_t> encode_container(nlohmann::json header, std::span<const double> tensors) {
  header["dtype"] = "f64";
  auto out = encode_prefix(header, 8 * tensors.size());
  for (double d : tensors) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(d));
  return out;
}

Container decode_container(std::span<const std::uint8_t> bytes, const std::string& what,
                           std::size_t (*expected_floats)(const nlohmann::json&)) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw_data_error("not a UNIC " + what + " file");
  }
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kFormatVersion) throw_data_error("unsupported UNIC format version " + std::to_string(version));
  const auto header_len = get_le<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - 16) throw_data_error("unexpected end of header");

  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw_data_error("malformed " + what + " header: " + e.what());
  }

  std::size_t count = 0;
  std::string dtype;
  try {
    count = expected_floats(c.header);
    dtype = c.header.value("dtype", std::string("f32"));
  } catch (const nlohmann::json::exception& e) {
    throw_data_error("malformed " + what + " header: " + e.what());
  }
  if (dtype != "f32" && dtype != "f64") throw_data_error("unsupported tensor dtype '" + dtype + "'");
  const std::size_t width = dtype == "f32" ? 4 : 8;
  const std::size_t start = 16 + header_len;
  const std::size_t available = bytes.size() - start;
  if (count > available / width) throw_data_error("unexpected end of tensor block");
  if (available > width * count) throw_data_error("trailing bytes after tensor block");

  c.tensors.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    c.tensors[i] = width == 4 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, start + 4 * i)))
                              : std::bit_cast<double>(get_le<std::uint64_t>(bytes, start + 8 * i));
  }
  return c;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_data_error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw_data_error("write failed for '" + path.string() + "'");
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data_error("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace unic
