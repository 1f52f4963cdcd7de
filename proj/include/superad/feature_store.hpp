#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "superad/grid.hpp"

namespace superad {

/// Height and width in pixels.
struct Size2 {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  bool operator==(const Size2&) const = default;
};

/// Patch tokens of one transformer block, laid out grid row, grid column, channel.
struct PatchFeatureGrid {
  int layer_index = 0;  // 1-based block index
  std::uint32_t grid_h = 0;
  std::uint32_t grid_w = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;

  [[nodiscard]] std::size_t num_patches() const { return std::size_t{grid_h} * grid_w; }
  [[nodiscard]] MatrixView as_matrix() const { return {values, num_patches(), dim}; }
  bool operator==(const PatchFeatureGrid&) const = default;
};

/// Everything the extractor produces for one image.
struct ImageFeatures {
  std::string image_id;
  Size2 original_size;
  Size2 resized_size;
  std::uint16_t patch_size = 14;
  std::vector<float> cls;
  std::vector<PatchFeatureGrid> layers;  // ascending layer_index

  [[nodiscard]] const PatchFeatureGrid* find_layer(int layer_index) const;
  [[nodiscard]] std::uint32_t dim() const { return static_cast<std::uint32_t>(cls.size()); }
  bool operator==(const ImageFeatures&) const = default;
};

/// Aspect-preserving resize target: the short side becomes `short_side`, the
/// long side is rounded to the nearest multiple of `patch_size` (ties up).
/// Throws std::invalid_argument on non-positive sizes or a short side that is
/// not a multiple of the patch size.
Size2 preprocess_dims(Size2 original, int short_side, int patch_size);

/// Throws ValidationError describing the first violated invariant.
void validate(const ImageFeatures& features);

/// Encodes to the SADF byte layout (little-endian). Validates first.
std::vector<std::uint8_t> encode_features(const ImageFeatures& features);

/// Decodes and validates. FormatError on bad magic/version, CorruptionError on
/// truncation or trailing bytes, ValidationError on geometry mismatch.
ImageFeatures decode_features(std::span<const std::uint8_t> bytes);

ImageFeatures read_feature_file(const std::filesystem::path& path);

/// Writes atomically (temp file + rename); nothing is created if validation fails.
void write_feature_file(const ImageFeatures& features, const std::filesystem::path& path);

}  // namespace superad

namespace superad {

/// Reads only the header and CLS vector of a SADF file (`layers` left empty).
/// Used to run reference selection without loading every patch grid.
ImageFeatures read_feature_prefix(const std::filesystem::path& path);

}  // namespace superad
