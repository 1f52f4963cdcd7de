#pragma once

#include <optional>
#include <string>
#include <vector>

#include "superad/config.hpp"
#include "superad/coreset.hpp"
#include "superad/feature_store.hpp"
#include "superad/grid.hpp"

namespace superad {

struct AnomalyMap {
  std::string image_id;
  FloatMap full_res;  // original_h x original_w
  std::vector<FloatMap> grid_maps;  // per layer, only when requested
  float image_score = 0.0f;  // max of full_res
};

/// Minimum cosine distance of each test patch to the bank layer, exact search.
FloatMap layer_anomaly_map(const PatchFeatureGrid& test_grid, const Matrix& bank_layer);

/// Elementwise mean. Throws ValidationError on an empty list or mismatched shapes.
FloatMap fuse_maps(const std::vector<FloatMap>& maps);

/// Bilinear upsampling with grid cell centers placed at the centers of their
/// pixel blocks; values beyond the outermost centers are held constant.
FloatMap upsample(const FloatMap& grid_map, Size2 target);

/// Gaussian blur with radius ceil(3 sigma) and reflected borders; sigma 0 is identity.
FloatMap smooth(const FloatMap& map, double sigma);

/// Sets every background cell that is not 4-connected to the border.
BoolMap fill_holes(const BoolMap& binary);

/// Smallest, over 4-connected paths from the border, of the largest score along
/// the path. Thresholding this map with `> t` equals fill_holes(map > t) for every t.
FloatMap fill_level(const FloatMap& map);

struct ScoreOptions {
  double smoothing_sigma = 0.0;
  bool keep_grid_maps = false;
};

/// Per-layer maps, mean fusion, upsampling to the original size, optional smoothing.
AnomalyMap score_image(const ImageFeatures& test, const MemoryBank& bank, const CategoryConfig& config,
                       const ScoreOptions& options);

}  // namespace superad
