#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace superad {

/// Dense row-major 2-D array. Used for patch grids, anomaly maps and masks.
template <typename T>
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  [[nodiscard]] std::size_t size() const { return data.size(); }
  [[nodiscard]] bool empty() const { return data.empty(); }
  [[nodiscard]] bool same_shape(const Grid& o) const { return rows == o.rows && cols == o.cols; }

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool operator==(const Grid&) const = default;
};

using FloatMap = Grid<float>;
// std::vector<bool> has no contiguous storage, so masks are bytes (0/1).
using BoolMap = Grid<unsigned char>;

/// Read-only view of an N x D row-major float matrix.
struct MatrixView {
  std::span<const float> values;
  std::size_t rows = 0;
  std::size_t cols = 0;

  [[nodiscard]] std::span<const float> row(std::size_t i) const { return values.subspan(i * cols, cols); }
};

/// Owning N x D row-major float matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  [[nodiscard]] MatrixView view() const { return {values, rows, cols}; }
  [[nodiscard]] std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values).subspan(i * cols, cols);
  }
  bool operator==(const Matrix&) const = default;
};

}  // namespace superad
