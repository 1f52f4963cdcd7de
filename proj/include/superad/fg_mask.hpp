#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "superad/config.hpp"
#include "superad/feature_store.hpp"
#include "superad/grid.hpp"

namespace superad {

struct PcaResult {
  std::vector<double> direction;    // unit length, largest-magnitude entry positive
  std::vector<double> projections;  // scores of the centered rows
  double explained_variance = 0.0;  // sample variance of `projections`
};

struct ForegroundMask {
  BoolMap grid;  // 1 = foreground
  double tau = 1.0;
  int kernel = 3;
  bool inverted = false;
  // The pipeline produced no foreground cell (or the PCA was degenerate);
  // `grid` is then all ones.
  bool degenerate = false;
};

/// First principal component of the rows of `data` (N >= 2), by power
/// iteration on the sample covariance. With `standardize`, channels are scaled
/// to unit variance after centering (constant channels are left at zero).
/// Throws DegenerateDataError when the covariance is zero.
PcaResult first_principal_component(MatrixView data, bool standardize = false);

/// out[i] = projections[i] > tau
std::vector<unsigned char> initial_mask(std::span<const double> projections, double tau);

/// Keeps the mask when the median per-channel variance of the masked rows is
/// at least that of the unmasked rows, otherwise negates it. Returns the mask
/// unchanged (not inverted) when either side has fewer than two rows.
std::pair<std::vector<unsigned char>, bool> resolve_orientation(MatrixView data,
                                                                std::span<const unsigned char> mask);

/// Binary morphology with a kernel x kernel square; cells outside the grid are background.
BoolMap dilate(const BoolMap& grid, int kernel);
BoolMap erode(const BoolMap& grid, int kernel);
BoolMap closing(const BoolMap& grid, int kernel);

/// Closing(Dilation(grid)).
BoolMap refine_mask(const BoolMap& grid, int kernel);

/// Runs PCA, thresholding, orientation and refinement on `config.mask_layer`.
ForegroundMask compute_foreground_mask(const ImageFeatures& features, const CategoryConfig& config);

}  // namespace superad
