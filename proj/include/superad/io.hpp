#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "superad/errors.hpp"
#include "superad/grid.hpp"

namespace superad::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Appends little-endian scalars to a byte buffer.
class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
  void put_string(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void put_floats(std::span<const float> f) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(f.data());
    bytes_.insert(bytes_.end(), p, p + f.size_bytes());
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader; running past the end throws CorruptionError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(std::string_view what) {
    require(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_string(std::size_t n, std::string_view what);
  std::vector<float> get_floats(std::size_t n, std::string_view what);
  std::span<const std::uint8_t> get_bytes(std::size_t n, std::string_view what);

  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }
  [[nodiscard]] std::size_t position() const { return pos_; }

 private:
  void require(std::size_t n, std::string_view what) const;

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes to a unique sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

/// ".anom": u32 H, u32 W, then H*W little-endian floats.
void write_anomaly_map(const std::filesystem::path& path, const FloatMap& map);
FloatMap read_anomaly_map(const std::filesystem::path& path);

/// Binary PGM (P5), 255 where the mask is set.
void write_pgm(const std::filesystem::path& path, const BoolMap& mask);

/// 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
struct Image8 {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

/// Reads any PNG libpng understands; converted to gray or RGB (alpha dropped).
Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

/// Ground-truth style mask: any nonzero gray level is foreground.
BoolMap read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const BoolMap& mask);

}  // namespace superad::io
