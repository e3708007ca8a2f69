#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lssa/image.hpp"

namespace lssa::io {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

/// 8-bit PNG encoding; channels must be 1 or 3. Values are clamped to [0,1]
/// and quantized to k/255, so images already on that lattice round-trip
/// exactly.
std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(std::span<const std::uint8_t> bytes);

void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

/// Raw little-endian float64 image dump: "LSIM" magic, C, H, W as int32, data.
void append_image_binary(std::vector<std::uint8_t>& out, const Image& image);
Image read_image_binary(std::span<const std::uint8_t> bytes, std::size_t& offset);

}  // namespace lssa::io
