#pragma once

// Data-parallel inner loops. Every kernel has a plain serial reference and an
// OpenMP version; tests check they agree and bench/ times them against each other.
// Results of the OpenMP versions do not depend on the thread count or schedule.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "superad/grid.hpp"

namespace superad::kernels {

/// Score assigned to a zero query vector (cosine undefined, treated as maximally far).
inline constexpr float kZeroVectorScore = 2.0f;

/// For every query row: 1 - max over bank rows of cosine similarity, clamped to
/// [0, 2]. Zero bank rows never match; zero query rows score kZeroVectorScore.
/// Requires at least one nonzero bank row and equal column counts.
std::vector<float> nn_cosine_distance_serial(MatrixView queries, MatrixView bank);
std::vector<float> nn_cosine_distance_omp(MatrixView queries, MatrixView bank);

/// Sample covariance (divides by n - 1) of an n x d row-major matrix that is
/// already centered. Returns a full symmetric d x d matrix.
std::vector<double> covariance_serial(std::span<const double> centered, std::size_t n, std::size_t d);
std::vector<double> covariance_omp(std::span<const double> centered, std::size_t n, std::size_t d);

/// min_dist[i] = min(min_dist[i], ||points[i] - points[center]||) for all i.
void update_min_distance_serial(MatrixView points, std::size_t center, std::span<double> min_dist);
void update_min_distance_omp(MatrixView points, std::size_t center, std::span<double> min_dist);

struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  Confusion& operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  bool operator==(const Confusion&) const = default;
};

/// Confusion counts of `pred` against `gt`; both hold 0/1 bytes of equal length.
Confusion count_confusion_serial(std::span<const unsigned char> pred, std::span<const unsigned char> gt);
Confusion count_confusion_omp(std::span<const unsigned char> pred, std::span<const unsigned char> gt);

}  // namespace superad::kernels
