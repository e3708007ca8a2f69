#include "lssa/io.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lssa/error.hpp"

namespace lssa::io {
namespace {

constexpr char kHex[] = "0123456789abcdef";

struct PngReadState {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void png_read_callback(png_structp png, png_bytep out, png_size_t count) {
  auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (state->offset + count > state->bytes.size()) png_error(png, "truncated png stream");
  std::memcpy(out, state->bytes.data() + state->offset, count);
  state->offset += count;
}

void png_write_callback(png_structp png, png_bytep data, png_size_t count) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + count);
}

void png_flush_callback(png_structp) {}

void png_error_callback(png_structp png, png_const_charp message) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text != nullptr) *text = message;
  png_longjmp(png, 1);
}

std::uint8_t quantize(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

template <typename T>
void append_pod(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T read_pod(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  require(offset + sizeof(T) <= bytes.size(), ErrorCode::kIo, "truncated binary image");
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    fail(ErrorCode::kIo, "sha256 failed");
  }
  std::string hex;
  hex.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::kIo, "short write to " + path.string());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  require(image.channels() == 1 || image.channels() == 3, ErrorCode::kInvalidArgument,
          "png encoding supports 1 or 3 channels, got " + std::to_string(image.channels()));
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_callback, nullptr);
  require(png != nullptr, ErrorCode::kIo, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  const int c = image.channels();
  std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width()) * c);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::kIo, "png encode: " + message);
  }
  png_set_write_fn(png, &out, png_write_callback, png_flush_callback);
  png_set_IHDR(png, info, image.width(), image.height(), 8,
               c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int ch = 0; ch < c; ++ch) row[static_cast<std::size_t>(x) * c + ch] = quantize(image(ch, y, x));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0, ErrorCode::kIo,
          "not a png stream");
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_callback, nullptr);
  require(png != nullptr, ErrorCode::kIo, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  PngReadState state{bytes, 0};
  Image image;
  std::vector<std::uint8_t> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::kIo, "png decode: " + message);
  }
  png_set_read_fn(png, &state, png_read_callback);
  png_read_info(png, info);
  const auto width = static_cast<int>(png_get_image_width(png, info));
  const auto height = static_cast<int>(png_get_image_height(png, info));
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  if (bit_depth != 8 || (color_type != PNG_COLOR_TYPE_RGB && color_type != PNG_COLOR_TYPE_GRAY)) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::kIo, "only 8-bit RGB or gray png is supported");
  }
  const int c = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  image = Image(c, height, width);
  row.resize(static_cast<std::size_t>(width) * c);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x) {
      for (int ch = 0; ch < c; ++ch) image(ch, y, x) = row[static_cast<std::size_t>(x) * c + ch] / 255.0;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  write_bytes(path, encode_png(image));
}

Image read_png(const std::filesystem::path& path) { return decode_png(read_bytes(path)); }

void append_image_binary(std::vector<std::uint8_t>& out, const Image& image) {
  out.insert(out.end(), {'L', 'S', 'I', 'M'});
  append_pod<std::int32_t>(out, image.channels());
  append_pod<std::int32_t>(out, image.height());
  append_pod<std::int32_t>(out, image.width());
  for (Eigen::Index i = 0; i < image.size(); ++i) append_pod<double>(out, image.array()[i]);
}

Image read_image_binary(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  require(offset + 4 <= bytes.size() && std::memcmp(bytes.data() + offset, "LSIM", 4) == 0,
          ErrorCode::kIo, "bad binary image magic");
  offset += 4;
  const auto c = read_pod<std::int32_t>(bytes, offset);
  const auto h = read_pod<std::int32_t>(bytes, offset);
  const auto w = read_pod<std::int32_t>(bytes, offset);
  Image image(c, h, w);
  for (Eigen::Index i = 0; i < image.size(); ++i) image.array()[i] = read_pod<double>(bytes, offset);
  return image;
}

}  // namespace lssa::io
