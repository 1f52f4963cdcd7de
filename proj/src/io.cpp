#include "superad/io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include <png.h>
#include <unistd.h>

namespace superad::io {

void ByteReader::require(std::size_t n, std::string_view what) const {
  if (bytes_.size() - pos_ < n) {
    std::ostringstream msg;
    msg << "truncated data while reading " << what << " at offset " << pos_ << " (need " << n << " bytes, "
        << bytes_.size() - pos_ << " left)";
    throw CorruptionError(msg.str());
  }
}

std::string ByteReader::get_string(std::size_t n, std::string_view what) {
  require(n, what);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::vector<float> ByteReader::get_floats(std::size_t n, std::string_view what) {
  if (n > remaining() / sizeof(float)) require(n * sizeof(float), what);
  std::vector<float> out(n);
  std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(float));
  pos_ += n * sizeof(float);
  return out;
}

std::span<const std::uint8_t> ByteReader::get_bytes(std::size_t n, std::string_view what) {
  require(n, what);
  auto s = bytes_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw IoError("cannot read " + path.string());
  }
  return bytes;
}

namespace {

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
  static std::atomic<unsigned> counter{0};
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  return tmp;
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  const auto tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw IoError("write failed for " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename onto " + path.string() + ": " + ec.message());
  }
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void write_anomaly_map(const std::filesystem::path& path, const FloatMap& map) {
  ByteWriter w;
  w.put<std::uint32_t>(static_cast<std::uint32_t>(map.rows));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(map.cols));
  w.put_floats(map.data);
  write_file_atomic(path, w.take());
}

FloatMap read_anomaly_map(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  FloatMap map;
  try {
    map.rows = r.get<std::uint32_t>("map height");
    map.cols = r.get<std::uint32_t>("map width");
    map.data = r.get_floats(map.rows * map.cols, "map values");
  } catch (const CorruptionError& e) {
    throw CorruptionError(path.string() + ": " + e.what());
  }
  if (r.remaining() != 0) throw CorruptionError(path.string() + ": trailing bytes after anomaly map");
  if (!std::all_of(map.data.begin(), map.data.end(), [](float v) { return std::isfinite(v); })) {
    throw ValidationError(path.string() + ": non-finite value in anomaly map");
  }
  return map;
}

void write_pgm(const std::filesystem::path& path, const BoolMap& mask) {
  std::string header = "P5\n" + std::to_string(mask.cols) + " " + std::to_string(mask.rows) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (auto v : mask.data) bytes.push_back(v ? 255 : 0);
  write_file_atomic(path, bytes);
}

Image8 read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  const auto bytes = read_file(path);
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError(path.string() + ": " + image.message);
  }
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 out;
  out.height = image.height;
  out.width = image.width;
  out.channels = gray ? 1 : 3;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError(path.string() + ": " + image.message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("write_png: 1 or 3 channels expected");
  if (img.pixels.size() != std::size_t{img.height} * img.width * img.channels) {
    throw std::invalid_argument("write_png: pixel buffer size mismatch");
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = img.width;
  image.height = img.height;
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw IoError(path.string() + ": " + image.message);
  }
  std::vector<std::uint8_t> buffer(size);
  if (!png_image_write_to_memory(&image, buffer.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw IoError(path.string() + ": " + image.message);
  }
  buffer.resize(size);
  write_file_atomic(path, buffer);
}

BoolMap read_mask_png(const std::filesystem::path& path) {
  auto img = read_png(path);
  BoolMap mask(img.height, img.width, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    bool on = false;
    for (std::uint32_t c = 0; c < img.channels; ++c) on = on || img.pixels[i * img.channels + c] != 0;
    mask.data[i] = on ? 1 : 0;
  }
  return mask;
}

void write_mask_png(const std::filesystem::path& path, const BoolMap& mask) {
  Image8 img{static_cast<std::uint32_t>(mask.rows), static_cast<std::uint32_t>(mask.cols), 1, {}};
  img.pixels.reserve(mask.size());
  for (auto v : mask.data) img.pixels.push_back(v ? 255 : 0);
  write_png(path, img);
}

}  // namespace superad::io
