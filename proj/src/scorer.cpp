#include "superad/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <tuple>

#include "superad/errors.hpp"
#include "superad/kernels.hpp"

namespace superad {

FloatMap layer_anomaly_map(const PatchFeatureGrid& test_grid, const Matrix& bank_layer) {
  if (bank_layer.rows == 0) throw ValidationError("layer_anomaly_map: empty bank layer");
  if (bank_layer.cols != test_grid.dim) {
    throw ValidationError("layer_anomaly_map: bank dim " + std::to_string(bank_layer.cols) + " != feature dim " +
                          std::to_string(test_grid.dim));
  }
  if (test_grid.values.size() != test_grid.num_patches() * test_grid.dim) {
    throw ValidationError("layer_anomaly_map: grid buffer size mismatch");
  }
  FloatMap map(test_grid.grid_h, test_grid.grid_w);
  try {
    map.data = kernels::nn_cosine_distance_omp(test_grid.as_matrix(), bank_layer.view());
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("layer_anomaly_map: ") + e.what());
  }
  return map;
}

FloatMap fuse_maps(const std::vector<FloatMap>& maps) {
  if (maps.empty()) throw ValidationError("fuse_maps: no maps");
  for (const auto& m : maps) {
    if (!m.same_shape(maps.front())) throw ValidationError("fuse_maps: maps differ in shape");
  }
  FloatMap out(maps.front().rows, maps.front().cols);
  const double inv = 1.0 / static_cast<double>(maps.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (const auto& m : maps) acc += m.data[i];
    out.data[i] = static_cast<float>(acc * inv);
  }
  return out;
}

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

// Source taps for each output coordinate: output pixel centers mapped into
// cell-center coordinates and clamped to the outermost centers.
std::vector<Tap> taps(std::size_t in, std::size_t out) {
  std::vector<Tap> t(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double u = (static_cast<double>(o) + 0.5) * scale - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(u));
    const std::size_t hi = std::min(lo + 1, in - 1);
    t[o] = {lo, hi, u - static_cast<double>(lo)};
  }
  return t;
}

}  // namespace

FloatMap upsample(const FloatMap& grid_map, Size2 target) {
  if (grid_map.empty()) throw ValidationError("upsample: empty map");
  if (target.height < grid_map.rows || target.width < grid_map.cols) {
    throw std::invalid_argument("upsample: target smaller than the grid");
  }
  const auto ty = taps(grid_map.rows, target.height);
  const auto tx = taps(grid_map.cols, target.width);
  FloatMap out(target.height, target.width);
  const auto rows = static_cast<std::ptrdiff_t>(target.height);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t y = 0; y < rows; ++y) {
    const auto& a = ty[y];
    for (std::size_t x = 0; x < target.width; ++x) {
      const auto& b = tx[x];
      const double top = grid_map(a.lo, b.lo) * (1.0 - b.frac) + grid_map(a.lo, b.hi) * b.frac;
      const double bottom = grid_map(a.hi, b.lo) * (1.0 - b.frac) + grid_map(a.hi, b.hi) * b.frac;
      out(y, x) = static_cast<float>(top * (1.0 - a.frac) + bottom * a.frac);
    }
  }
  return out;
}

namespace {

// Symmetric reflection (d c b a | a b c d), valid for any offset.
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<std::ptrdiff_t>(n) ? i : period - 1 - i);
}

}  // namespace

FloatMap smooth(const FloatMap& map, double sigma) {
  if (sigma < 0) throw std::invalid_argument("smooth: sigma must be >= 0");
  if (sigma == 0.0 || map.empty()) return map;
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> w(2 * radius + 1);
  double total = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
    w[k + radius] = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    total += w[k + radius];
  }
  for (auto& v : w) v /= total;

  std::vector<double> tmp(map.size());
  const auto rows = static_cast<std::ptrdiff_t>(map.rows);
  const auto cols = static_cast<std::ptrdiff_t>(map.cols);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t y = 0; y < rows; ++y) {
    for (std::ptrdiff_t x = 0; x < cols; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) acc += w[k + radius] * map(y, reflect(x + k, map.cols));
      tmp[y * cols + x] = acc;
    }
  }
  FloatMap out(map.rows, map.cols);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t y = 0; y < rows; ++y) {
    for (std::ptrdiff_t x = 0; x < cols; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) acc += w[k + radius] * tmp[reflect(y + k, map.rows) * cols + x];
      out(y, x) = static_cast<float>(acc);
    }
  }
  return out;
}

BoolMap fill_holes(const BoolMap& binary) {
  const std::size_t rows = binary.rows, cols = binary.cols;
  BoolMap reached(rows, cols, 0);
  std::vector<std::size_t> stack;
  auto seed = [&](std::size_t y, std::size_t x) {
    if (!binary(y, x) && !reached(y, x)) {
      reached(y, x) = 1;
      stack.push_back(y * cols + x);
    }
  };
  for (std::size_t x = 0; x < cols && rows > 0; ++x) {
    seed(0, x);
    seed(rows - 1, x);
  }
  for (std::size_t y = 0; y < rows && cols > 0; ++y) {
    seed(y, 0);
    seed(y, cols - 1);
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const std::size_t y = i / cols, x = i % cols;
    if (y > 0) seed(y - 1, x);
    if (y + 1 < rows) seed(y + 1, x);
    if (x > 0) seed(y, x - 1);
    if (x + 1 < cols) seed(y, x + 1);
  }
  BoolMap out(rows, cols, 0);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = (binary.data[i] || !reached.data[i]) ? 1 : 0;
  return out;
}

FloatMap fill_level(const FloatMap& map) {
  const std::size_t rows = map.rows, cols = map.cols;
  FloatMap level(rows, cols, 0.0f);
  if (map.empty()) return level;
  std::vector<unsigned char> seen(map.size(), 0);
  using Entry = std::pair<float, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  auto push = [&](std::size_t i, float lv) {
    seen[i] = 1;
    level.data[i] = lv;
    queue.emplace(lv, i);
  };
  for (std::size_t y = 0; y < rows; ++y) {
    for (std::size_t x = 0; x < cols; ++x) {
      if (y == 0 || x == 0 || y + 1 == rows || x + 1 == cols) push(y * cols + x, map(y, x));
    }
  }
  while (!queue.empty()) {
    const auto [lv, i] = queue.top();
    queue.pop();
    const std::size_t y = i / cols, x = i % cols;
    auto visit = [&](std::size_t j) {
      if (!seen[j]) push(j, std::max(lv, map.data[j]));
    };
    if (y > 0) visit(i - cols);
    if (y + 1 < rows) visit(i + cols);
    if (x > 0) visit(i - 1);
    if (x + 1 < cols) visit(i + 1);
  }
  return level;
}

AnomalyMap score_image(const ImageFeatures& test, const MemoryBank& bank, const CategoryConfig& config,
                       const ScoreOptions& options) {
  if (bank.config_hash != bank_config_hash(config)) {
    throw ConfigError("score_image: bank for '" + bank.category + "' was built with a different configuration");
  }
  std::vector<FloatMap> maps;
  maps.reserve(config.layer_indices.size());
  for (int layer_index : config.layer_indices) {
    const auto* grid = test.find_layer(layer_index);
    const auto* bank_layer = bank.find_layer(layer_index);
    if (grid == nullptr || bank_layer == nullptr) {
      throw ValidationError("score_image: layer " + std::to_string(layer_index) + " missing for '" + test.image_id + "'");
    }
    maps.push_back(layer_anomaly_map(*grid, bank_layer->rows));
  }
  AnomalyMap out;
  out.image_id = test.image_id;
  out.full_res = smooth(upsample(fuse_maps(maps), test.original_size), options.smoothing_sigma);
  out.image_score = *std::max_element(out.full_res.data.begin(), out.full_res.data.end());
  if (options.keep_grid_maps) out.grid_maps = std::move(maps);
  return out;
}

}  // namespace superad
