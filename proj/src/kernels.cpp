#include "superad/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace superad::kernels {

namespace {

double dot_serial(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

double dot_simd(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

void check_shapes(MatrixView queries, MatrixView bank) {
  if (queries.cols != bank.cols) throw std::invalid_argument("nn_cosine_distance: dimension mismatch");
  if (bank.rows == 0) throw std::invalid_argument("nn_cosine_distance: empty bank");
}

float to_distance(double best_similarity) {
  return static_cast<float>(std::clamp(1.0 - best_similarity, 0.0, 2.0));
}

}  // namespace

std::vector<float> nn_cosine_distance_serial(MatrixView queries, MatrixView bank) {
  check_shapes(queries, bank);
  std::vector<double> bank_norm(bank.rows);
  for (std::size_t j = 0; j < bank.rows; ++j) bank_norm[j] = std::sqrt(dot_serial(bank.row(j), bank.row(j)));
  if (std::all_of(bank_norm.begin(), bank_norm.end(), [](double n) { return n == 0.0; })) {
    throw std::invalid_argument("nn_cosine_distance: bank has no nonzero row");
  }

  std::vector<float> out(queries.rows);
  for (std::size_t i = 0; i < queries.rows; ++i) {
    const auto q = queries.row(i);
    const double qn = std::sqrt(dot_serial(q, q));
    if (qn == 0.0) {
      out[i] = kZeroVectorScore;
      continue;
    }
    double best = -2.0;
    for (std::size_t j = 0; j < bank.rows; ++j) {
      if (bank_norm[j] == 0.0) continue;
      best = std::max(best, dot_serial(q, bank.row(j)) / (qn * bank_norm[j]));
    }
    out[i] = to_distance(best);
  }
  return out;
}

std::vector<float> nn_cosine_distance_omp(MatrixView queries, MatrixView bank) {
  check_shapes(queries, bank);
  const std::size_t d = bank.cols;
  const auto nq = static_cast<std::ptrdiff_t>(queries.rows);
  const auto nb = static_cast<std::ptrdiff_t>(bank.rows);
  const float* qdata = queries.values.data();
  const float* bdata = bank.values.data();

  std::vector<double> bank_inv(bank.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < nb; ++j) {
    const double n = std::sqrt(dot_simd(bdata + j * d, bdata + j * d, d));
    bank_inv[j] = n == 0.0 ? 0.0 : 1.0 / n;
  }
  if (std::all_of(bank_inv.begin(), bank_inv.end(), [](double v) { return v == 0.0; })) {
    throw std::invalid_argument("nn_cosine_distance: bank has no nonzero row");
  }

  // Tiles of queries x bank rows keep a bank block hot in cache while it is
  // matched against several queries. Each query's max is owned by one thread.
  constexpr std::ptrdiff_t kQueryTile = 16;
  constexpr std::ptrdiff_t kBankTile = 256;
  std::vector<double> best(queries.rows, -2.0);
  std::vector<double> query_inv(queries.rows);
  for (std::ptrdiff_t i = 0; i < nq; ++i) {
    const double n = std::sqrt(dot_simd(qdata + i * d, qdata + i * d, d));
    query_inv[i] = n == 0.0 ? 0.0 : 1.0 / n;
  }

  const std::ptrdiff_t n_tiles = (nq + kQueryTile - 1) / kQueryTile;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t t = 0; t < n_tiles; ++t) {
    const std::ptrdiff_t q0 = t * kQueryTile;
    const std::ptrdiff_t q1 = std::min(nq, q0 + kQueryTile);
    for (std::ptrdiff_t b0 = 0; b0 < nb; b0 += kBankTile) {
      const std::ptrdiff_t b1 = std::min(nb, b0 + kBankTile);
      for (std::ptrdiff_t i = q0; i < q1; ++i) {
        if (query_inv[i] == 0.0) continue;
        const float* q = qdata + i * d;
        double local = best[i];
        for (std::ptrdiff_t j = b0; j < b1; ++j) {
          if (bank_inv[j] == 0.0) continue;
          const double sim = dot_simd(q, bdata + j * d, d) * query_inv[i] * bank_inv[j];
          local = std::max(local, sim);
        }
        best[i] = local;
      }
    }
  }

  std::vector<float> out(queries.rows);
  for (std::ptrdiff_t i = 0; i < nq; ++i) out[i] = query_inv[i] == 0.0 ? kZeroVectorScore : to_distance(best[i]);
  return out;
}

std::vector<double> covariance_serial(std::span<const double> x, std::size_t n, std::size_t d) {
  if (n < 2) throw std::invalid_argument("covariance: need at least two rows");
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.data() + r * d;
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) cov[a * d + b] += row[a] * row[b];
    }
  }
  const double scale = 1.0 / static_cast<double>(n - 1);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      cov[a * d + b] *= scale;
      cov[b * d + a] = cov[a * d + b];
    }
  }
  return cov;
}

std::vector<double> covariance_omp(std::span<const double> x, std::size_t n, std::size_t d) {
  if (n < 2) throw std::invalid_argument("covariance: need at least two rows");
  // Transposed copy so that each (a, b) entry is a contiguous dot product.
  std::vector<double> xt(d * n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t a = 0; a < d; ++a) xt[a * n + r] = x[r * d + a];
  }
  std::vector<double> cov(d * d, 0.0);
  const double scale = 1.0 / static_cast<double>(n - 1);
  const auto dd = static_cast<std::ptrdiff_t>(d);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t a = 0; a < dd; ++a) {
    const double* ca = xt.data() + a * n;
    for (std::ptrdiff_t b = a; b < dd; ++b) {
      const double* cb = xt.data() + b * n;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t r = 0; r < n; ++r) acc += ca[r] * cb[r];
      cov[a * d + b] = acc * scale;
      cov[b * d + a] = acc * scale;
    }
  }
  return cov;
}

namespace {

double l2_distance(const float* a, const float* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

}  // namespace

void update_min_distance_serial(MatrixView points, std::size_t center, std::span<double> min_dist) {
  const float* c = points.values.data() + center * points.cols;
  for (std::size_t i = 0; i < points.rows; ++i) {
    min_dist[i] = std::min(min_dist[i], l2_distance(points.values.data() + i * points.cols, c, points.cols));
  }
}

void update_min_distance_omp(MatrixView points, std::size_t center, std::span<double> min_dist) {
  const float* c = points.values.data() + center * points.cols;
  const auto n = static_cast<std::ptrdiff_t>(points.rows);
  // Same per-point arithmetic as the serial version, so results are bit-identical.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    min_dist[i] = std::min(min_dist[i], l2_distance(points.values.data() + i * points.cols, c, points.cols));
  }
}

Confusion count_confusion_serial(std::span<const unsigned char> pred, std::span<const unsigned char> gt) {
  if (pred.size() != gt.size()) throw std::invalid_argument("count_confusion: size mismatch");
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool g = gt[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

Confusion count_confusion_omp(std::span<const unsigned char> pred, std::span<const unsigned char> gt) {
  if (pred.size() != gt.size()) throw std::invalid_argument("count_confusion: size mismatch");
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  const auto n = static_cast<std::ptrdiff_t>(pred.size());
#pragma omp parallel for reduction(+ : tp, fp, fn, tn) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const bool p = pred[i] != 0;
    const bool g = gt[i] != 0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
    tn += !p && !g;
  }
  return {tp, fp, fn, tn};
}

}  // namespace superad::kernels
