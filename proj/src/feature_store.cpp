#include "superad/feature_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "superad/errors.hpp"
#include "superad/io.hpp"

namespace superad {

namespace {

constexpr char kMagic[4] = {'S', 'A', 'D', 'F'};
constexpr std::uint16_t kVersion = 1;

bool all_finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

[[noreturn]] void invalid(const ImageFeatures& f, const std::string& what) {
  throw ValidationError("feature bundle '" + f.image_id + "': " + what);
}

}  // namespace

const PatchFeatureGrid* ImageFeatures::find_layer(int layer_index) const {
  for (const auto& l : layers) {
    if (l.layer_index == layer_index) return &l;
  }
  return nullptr;
}

Size2 preprocess_dims(Size2 original, int short_side, int patch_size) {
  if (original.height == 0 || original.width == 0) {
    throw std::invalid_argument("preprocess_dims: image dimensions must be positive");
  }
  if (patch_size <= 0 || short_side <= 0 || short_side % patch_size != 0) {
    throw std::invalid_argument("preprocess_dims: short side " + std::to_string(short_side) +
                                " must be a positive multiple of patch size " + std::to_string(patch_size));
  }
  const bool tall = original.height > original.width;
  const std::uint64_t shorter = tall ? original.width : original.height;
  const std::uint64_t longer = tall ? original.height : original.width;
  const std::uint64_t s = static_cast<std::uint64_t>(short_side);
  const std::uint64_t p = static_cast<std::uint64_t>(patch_size);
  // round(longer * s / (shorter * p)), halves up, in exact integer arithmetic
  const std::uint64_t patches = (2 * longer * s + shorter * p) / (2 * shorter * p);
  const auto long_px = static_cast<std::uint32_t>(patches * p);
  const auto short_px = static_cast<std::uint32_t>(s);
  return tall ? Size2{long_px, short_px} : Size2{short_px, long_px};
}

void validate(const ImageFeatures& f) {
  if (f.patch_size == 0) invalid(f, "patch_size is zero");
  if (f.original_size.height == 0 || f.original_size.width == 0) invalid(f, "original size has a zero side");
  const auto& rs = f.resized_size;
  if (rs.height == 0 || rs.width == 0 || rs.height % f.patch_size != 0 || rs.width % f.patch_size != 0) {
    invalid(f, "resized size " + std::to_string(rs.height) + "x" + std::to_string(rs.width) +
                   " is not a positive multiple of patch size " + std::to_string(f.patch_size));
  }
  const std::uint32_t gh = rs.height / f.patch_size;
  const std::uint32_t gw = rs.width / f.patch_size;
  if (f.original_size.height < gh || f.original_size.width < gw) {
    invalid(f, "original size is smaller than the patch grid");
  }
  if (f.cls.empty()) invalid(f, "empty CLS vector");
  if (!all_finite(f.cls)) invalid(f, "non-finite CLS value");
  if (f.layers.empty()) invalid(f, "no feature layers");
  if (f.layers.size() > 255) invalid(f, "too many layers");
  int previous = 0;
  for (const auto& l : f.layers) {
    if (l.layer_index <= previous || l.layer_index > 0xFFFF) {
      invalid(f, "layer indices must be positive and strictly ascending");
    }
    previous = l.layer_index;
    if (l.grid_h != gh || l.grid_w != gw) {
      std::ostringstream msg;
      msg << "layer " << l.layer_index << " grid " << l.grid_h << "x" << l.grid_w << " does not match resized size / patch size = "
          << gh << "x" << gw;
      invalid(f, msg.str());
    }
    if (l.dim != f.cls.size()) invalid(f, "layer " + std::to_string(l.layer_index) + " dim differs from CLS length");
    if (l.values.size() != l.num_patches() * l.dim) {
      invalid(f, "layer " + std::to_string(l.layer_index) + " buffer length is not grid_h*grid_w*dim");
    }
    if (!all_finite(l.values)) invalid(f, "non-finite value in layer " + std::to_string(l.layer_index));
  }
}

std::vector<std::uint8_t> encode_features(const ImageFeatures& f) {
  validate(f);
  io::ByteWriter w;
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint16_t>(f.patch_size);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(f.image_id.size()));
  w.put_string(f.image_id);
  w.put<std::uint32_t>(f.original_size.height);
  w.put<std::uint32_t>(f.original_size.width);
  w.put<std::uint32_t>(f.resized_size.height);
  w.put<std::uint32_t>(f.resized_size.width);
  w.put<std::uint32_t>(f.dim());
  w.put<std::uint32_t>(f.dim());
  w.put_floats(f.cls);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(f.layers.size()));
  for (const auto& l : f.layers) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(l.layer_index));
    w.put<std::uint32_t>(l.grid_h);
    w.put<std::uint32_t>(l.grid_w);
    w.put_floats(l.values);
  }
  return w.take();
}

ImageFeatures decode_features(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  const auto magic = r.get_bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), reinterpret_cast<const std::uint8_t*>(kMagic))) {
    throw FormatError("not a SADF file (bad magic)");
  }
  const auto version = r.get<std::uint16_t>("version");
  if (version != kVersion) throw FormatError("unsupported SADF version " + std::to_string(version));

  ImageFeatures f;
  f.patch_size = r.get<std::uint16_t>("patch size");
  const auto id_len = r.get<std::uint32_t>("image id length");
  f.image_id = r.get_string(id_len, "image id");
  f.original_size.height = r.get<std::uint32_t>("original height");
  f.original_size.width = r.get<std::uint32_t>("original width");
  f.resized_size.height = r.get<std::uint32_t>("resized height");
  f.resized_size.width = r.get<std::uint32_t>("resized width");
  const auto dim = r.get<std::uint32_t>("dim");
  const auto cls_len = r.get<std::uint32_t>("CLS length");
  if (cls_len != dim) throw ValidationError("SADF '" + f.image_id + "': CLS length differs from dim");
  f.cls = r.get_floats(cls_len, "CLS vector");
  const auto n_layers = r.get<std::uint8_t>("layer count");
  f.layers.resize(n_layers);
  for (auto& l : f.layers) {
    l.layer_index = r.get<std::uint16_t>("layer index");
    l.grid_h = r.get<std::uint32_t>("grid height");
    l.grid_w = r.get<std::uint32_t>("grid width");
    l.dim = dim;
    const std::uint64_t count = std::uint64_t{l.grid_h} * l.grid_w * dim;
    if (count > r.remaining() / sizeof(float)) {
      throw CorruptionError("SADF '" + f.image_id + "': truncated in layer " + std::to_string(l.layer_index));
    }
    l.values = r.get_floats(static_cast<std::size_t>(count), "layer values");
  }
  if (r.remaining() != 0) {
    throw CorruptionError("SADF '" + f.image_id + "': " + std::to_string(r.remaining()) + " trailing bytes");
  }
  validate(f);
  return f;
}

ImageFeatures read_feature_file(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  try {
    return decode_features(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const CorruptionError& e) {
    throw CorruptionError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_feature_file(const ImageFeatures& features, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_features(features));
}

}  // namespace superad

namespace superad {

ImageFeatures read_feature_prefix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> buf;
  auto pull = [&](std::size_t n) {
    const auto old = buf.size();
    buf.resize(old + n);
    in.read(reinterpret_cast<char*>(buf.data() + old), static_cast<std::streamsize>(n));
    buf.resize(old + static_cast<std::size_t>(in.gcount()));
  };
  // magic, version, patch size, id length
  pull(12);
  std::uint32_t id_len = 0;
  if (buf.size() == 12) std::memcpy(&id_len, buf.data() + 8, 4);
  pull(id_len + 24);
  std::uint32_t dim = 0;
  if (buf.size() == 12 + id_len + 24) std::memcpy(&dim, buf.data() + 12 + id_len + 16, 4);
  pull(std::size_t{dim} * sizeof(float));

  try {
    io::ByteReader r(buf);
    const auto magic = r.get_bytes(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), reinterpret_cast<const std::uint8_t*>(kMagic))) {
      throw FormatError("not a SADF file (bad magic)");
    }
    if (r.get<std::uint16_t>("version") != kVersion) throw FormatError("unsupported SADF version");
    ImageFeatures f;
    f.patch_size = r.get<std::uint16_t>("patch size");
    f.image_id = r.get_string(r.get<std::uint32_t>("image id length"), "image id");
    f.original_size = {r.get<std::uint32_t>("original height"), r.get<std::uint32_t>("original width")};
    f.resized_size = {r.get<std::uint32_t>("resized height"), r.get<std::uint32_t>("resized width")};
    const auto d = r.get<std::uint32_t>("dim");
    if (r.get<std::uint32_t>("CLS length") != d) throw ValidationError("CLS length differs from dim");
    f.cls = r.get_floats(d, "CLS vector");
    if (f.cls.empty() || !all_finite(f.cls)) throw ValidationError("empty or non-finite CLS vector");
    return f;
  } catch (const DataError& e) {
    throw CorruptionError(path.string() + ": " + e.what());
  }
}

}  // namespace superad
