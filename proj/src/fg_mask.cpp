#include "superad/fg_mask.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "superad/errors.hpp"
#include "superad/kernels.hpp"

namespace superad {

namespace {

constexpr double kResidualTolerance = 1e-10;
constexpr int kMaxIterations = 100000;

std::vector<double> mat_vec(const std::vector<double>& m, const std::vector<double>& v) {
  const std::size_t d = v.size();
  std::vector<double> out(d, 0.0);
  for (std::size_t a = 0; a < d; ++a) {
    double acc = 0.0;
    for (std::size_t b = 0; b < d; ++b) acc += m[a * d + b] * v[b];
    out[a] = acc;
  }
  return out;
}

double norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

bool normalize(std::vector<double>& v) {
  const double n = norm(v);
  if (n == 0.0 || !std::isfinite(n)) return false;
  for (double& x : v) x /= n;
  return true;
}

// Repeated squaring C -> C^2 -> C^4 ..., rescaled each time; powers the gap
// between the top two eigenvalues so power iteration needs few steps.
std::vector<double> squared_power(std::vector<double> m, std::size_t d, int squarings) {
  std::vector<double> next(d * d);
  for (int s = 0; s < squarings; ++s) {
    double frob = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += m[a * d + c] * m[c * d + b];
        next[a * d + b] = acc;
        frob += acc * acc;
      }
    }
    frob = std::sqrt(frob);
    if (frob == 0.0) break;
    for (auto& x : next) x /= frob;
    m.swap(next);
  }
  return m;
}

// Rayleigh quotient and residual ||C v - lambda v|| for unit v.
std::pair<double, double> rayleigh(const std::vector<double>& cov, const std::vector<double>& v) {
  const auto cv = mat_vec(cov, v);
  double lambda = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) lambda += v[i] * cv[i];
  double res = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) res += (cv[i] - lambda * v[i]) * (cv[i] - lambda * v[i]);
  return {lambda, std::sqrt(res)};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Sample variance per channel over the rows where mask == want.
std::vector<double> channel_variance(MatrixView x, std::span<const unsigned char> mask, bool want) {
  std::vector<double> mean(x.cols, 0.0), m2(x.cols, 0.0);
  std::size_t count = 0;
  for (std::size_t r = 0; r < x.rows; ++r) {
    if ((mask[r] != 0) != want) continue;
    ++count;
    const auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols; ++c) {
      const double delta = row[c] - mean[c];
      mean[c] += delta / static_cast<double>(count);
      m2[c] += delta * (row[c] - mean[c]);
    }
  }
  for (auto& v : m2) v /= static_cast<double>(count - 1);
  return m2;
}

}  // namespace

PcaResult first_principal_component(MatrixView data, bool standardize) {
  const std::size_t n = data.rows;
  const std::size_t d = data.cols;
  if (n < 2 || d == 0) throw std::invalid_argument("first_principal_component: need at least two rows");

  std::vector<double> mean(d, 0.0);
  double raw_scale = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double x = data.values[r * d + c];
      mean[c] += x;
      raw_scale += x * x;
    }
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  raw_scale /= static_cast<double>(n);

  std::vector<double> centered(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) centered[r * d + c] = data.values[r * d + c] - mean[c];
  }

  auto cov = kernels::covariance_omp(centered, n, d);
  double trace = 0.0;
  for (std::size_t c = 0; c < d; ++c) trace += cov[c * d + c];
  if (!(trace > 1e-20 * std::max(raw_scale, 1e-300))) {
    throw DegenerateDataError("first_principal_component: zero covariance (all rows identical)");
  }

  if (standardize) {
    for (std::size_t c = 0; c < d; ++c) {
      const double sd = std::sqrt(cov[c * d + c]);
      const double inv = sd > 1e-12 * std::sqrt(trace) ? 1.0 / sd : 0.0;
      for (std::size_t r = 0; r < n; ++r) centered[r * d + c] *= inv;
    }
    cov = kernels::covariance_omp(centered, n, d);
  }

  // Deterministic pseudo-random start, reproducible across platforms.
  std::mt19937_64 rng(0x5eed5eedULL);
  std::vector<double> v(d);
  for (auto& x : v) x = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
  normalize(v);

  const int squarings = d <= 256 ? 8 : 0;
  const auto accel = squarings > 0 ? squared_power(cov, d, squarings) : cov;
  double lambda = 0.0;
  for (int it = 0; it < kMaxIterations; ++it) {
    auto next = mat_vec(accel, v);
    if (!normalize(next)) break;
    v.swap(next);
    if (it % 4 != 3) continue;
    const auto [l, res] = rayleigh(cov, v);
    lambda = l;
    if (res <= kResidualTolerance * std::abs(l)) break;
  }
  lambda = rayleigh(cov, v).first;

  std::size_t largest = 0;
  for (std::size_t c = 1; c < d; ++c) {
    if (std::abs(v[c]) > std::abs(v[largest])) largest = c;
  }
  if (v[largest] < 0) {
    for (auto& x : v) x = -x;
  }

  PcaResult out;
  out.projections.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += centered[r * d + c] * v[c];
    out.projections[r] = acc;
  }
  out.direction = std::move(v);
  out.explained_variance = lambda;
  return out;
}

std::vector<unsigned char> initial_mask(std::span<const double> projections, double tau) {
  std::vector<unsigned char> out(projections.size());
  std::transform(projections.begin(), projections.end(), out.begin(),
                 [tau](double p) -> unsigned char { return p > tau ? 1 : 0; });
  return out;
}

std::pair<std::vector<unsigned char>, bool> resolve_orientation(MatrixView data, std::span<const unsigned char> mask) {
  if (mask.size() != data.rows) throw std::invalid_argument("resolve_orientation: mask length differs from row count");
  std::vector<unsigned char> out(mask.begin(), mask.end());
  const auto on = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto v) { return v != 0; }));
  const std::size_t off = mask.size() - on;
  if (on < 2 || off < 2 || data.cols == 0) return {out, false};
  const double md_masked = median(channel_variance(data, mask, true));
  const double md_rest = median(channel_variance(data, mask, false));
  if (md_masked >= md_rest) return {out, false};
  for (auto& v : out) v = v ? 0 : 1;
  return {out, true};
}

namespace {

void check_kernel(int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("morphology kernel must be odd and >= 1");
}

// Square-window max (dilate) or min (erode); outside cells count as 0 for both.
BoolMap window_op(const BoolMap& g, int kernel, bool dilation) {
  check_kernel(kernel);
  const auto r = static_cast<std::ptrdiff_t>(kernel / 2);
  const auto rows = static_cast<std::ptrdiff_t>(g.rows);
  const auto cols = static_cast<std::ptrdiff_t>(g.cols);
  BoolMap out(g.rows, g.cols, 0);
  for (std::ptrdiff_t y = 0; y < rows; ++y) {
    for (std::ptrdiff_t x = 0; x < cols; ++x) {
      bool any = false;
      bool all = true;
      for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
        for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
          const std::ptrdiff_t yy = y + dy, xx = x + dx;
          const bool v = yy >= 0 && yy < rows && xx >= 0 && xx < cols && g(yy, xx) != 0;
          any = any || v;
          all = all && v;
        }
      }
      out(y, x) = (dilation ? any : all) ? 1 : 0;
    }
  }
  return out;
}

}  // namespace

BoolMap dilate(const BoolMap& grid, int kernel) { return window_op(grid, kernel, true); }
BoolMap erode(const BoolMap& grid, int kernel) { return window_op(grid, kernel, false); }
BoolMap closing(const BoolMap& grid, int kernel) { return erode(dilate(grid, kernel), kernel); }
BoolMap refine_mask(const BoolMap& grid, int kernel) { return closing(dilate(grid, kernel), kernel); }

ForegroundMask compute_foreground_mask(const ImageFeatures& features, const CategoryConfig& config) {
  const auto* layer = features.find_layer(config.mask_layer);
  if (layer == nullptr) {
    throw ValidationError("compute_foreground_mask: '" + features.image_id + "' has no layer " +
                          std::to_string(config.mask_layer));
  }
  ForegroundMask out;
  out.tau = config.tau;
  out.kernel = config.kernel;
  const auto all_true = BoolMap(layer->grid_h, layer->grid_w, 1);
  const auto x = layer->as_matrix();

  PcaResult pca;
  try {
    pca = first_principal_component(x, config.standardize);
  } catch (const DegenerateDataError&) {
    out.grid = all_true;
    out.degenerate = true;
    return out;
  }
  auto [mask, inverted] = resolve_orientation(x, initial_mask(pca.projections, config.tau));
  out.inverted = inverted;
  BoolMap grid(layer->grid_h, layer->grid_w);
  grid.data = std::move(mask);
  out.grid = refine_mask(grid, config.kernel);
  if (std::none_of(out.grid.data.begin(), out.grid.data.end(), [](auto v) { return v != 0; })) {
    out.grid = all_true;
    out.degenerate = true;
  }
  return out;
}

}  // namespace superad
