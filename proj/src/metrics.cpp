#include "superad/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "superad/errors.hpp"
#include "superad/scorer.hpp"

namespace superad {

F1Score f1_from_counts(const kernels::Confusion& c) {
  F1Score s;
  s.counts = c;
  const double tp = static_cast<double>(c.tp);
  if (c.tp + c.fp > 0) s.precision = tp / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) s.recall = tp / static_cast<double>(c.tp + c.fn);
  // Counts form: one correctly rounded division, so equal ratios compare equal
  // and threshold ties resolve by order rather than by rounding noise.
  if (c.tp > 0) s.f1 = 2.0 * tp / static_cast<double>(2 * c.tp + c.fp + c.fn);
  return s;
}

namespace {

template <typename A, typename B>
void check_pairs(const std::vector<A>& a, const std::vector<B>& b, const char* who) {
  if (a.size() != b.size()) throw ValidationError(std::string(who) + ": different number of maps and masks");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows != b[i].rows || a[i].cols != b[i].cols) {
      throw ValidationError(std::string(who) + ": shape mismatch at index " + std::to_string(i));
    }
  }
}

}  // namespace

F1Score pixel_f1(const std::vector<BoolMap>& pred, const std::vector<BoolMap>& gt) {
  check_pairs(pred, gt, "pixel_f1");
  kernels::Confusion total;
  for (std::size_t i = 0; i < pred.size(); ++i) total += kernels::count_confusion_omp(pred[i].data, gt[i].data);
  return f1_from_counts(total);
}

std::vector<double> threshold_candidates(std::vector<float> pooled) {
  if (pooled.empty()) return {};
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> unique;
  for (float v : pooled) {
    if (unique.empty() || unique.back() != v) unique.push_back(v);
  }
  constexpr std::size_t kLevels = 1024;
  if (unique.size() <= kLevels) return unique;
  std::vector<double> out;
  out.reserve(kLevels + 1);
  const std::size_t n = pooled.size();
  for (std::size_t i = 0; i < kLevels; ++i) {
    const double v = pooled[i * (n - 1) / (kLevels - 1)];
    if (out.empty() || out.back() != v) out.push_back(v);
  }
  if (out.back() != pooled.back()) out.push_back(pooled.back());
  return out;
}

BoolMap binarize(const FloatMap& map, double threshold, bool hole_fill) {
  BoolMap out(map.rows, map.cols, 0);
  for (std::size_t i = 0; i < map.size(); ++i) out.data[i] = map.data[i] > threshold ? 1 : 0;
  return hole_fill ? fill_holes(out) : out;
}

ThresholdChoice best_threshold(const std::vector<FloatMap>& maps, const std::vector<BoolMap>& gt, bool hole_fill) {
  check_pairs(maps, gt, "best_threshold");
  std::vector<float> pooled;
  std::vector<float> pos, neg;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    pooled.insert(pooled.end(), maps[i].data.begin(), maps[i].data.end());
    // With hole filling, (fill_level > t) is exactly the filled binarization at t.
    const FloatMap effective = hole_fill ? fill_level(maps[i]) : maps[i];
    for (std::size_t p = 0; p < effective.size(); ++p) (gt[i].data[p] ? pos : neg).push_back(effective.data[p]);
  }
  if (pos.empty()) throw UndefinedMetricError("best_threshold: ground truth has no anomalous pixel");
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());

  ThresholdChoice best;
  bool have = false;
  for (double t : threshold_candidates(std::move(pooled))) {
    auto above = [t](const std::vector<float>& v) {
      return static_cast<std::uint64_t>(v.end() - std::upper_bound(v.begin(), v.end(), t,
                                                                   [](double a, float b) { return a < b; }));
    };
    kernels::Confusion c;
    c.tp = above(pos);
    c.fp = above(neg);
    c.fn = pos.size() - c.tp;
    c.tn = neg.size() - c.fp;
    const auto s = f1_from_counts(c);
    if (!have || s.f1 > best.score.f1) {
      best = {t, s};
      have = true;
    }
  }
  return best;
}

namespace {

struct CurveSample {
  float score;
  bool negative;
  double weight;  // contribution to the y axis when predicted positive
};

// Sweeps thresholds from high to low over unique scores and integrates
// y against FPR on [0, limit] with trapezoids, normalized by limit.
double limited_curve_area(std::vector<CurveSample> samples, std::uint64_t negatives, double limit) {
  std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  double area = 0.0;
  double x0 = 0.0, y0 = 0.0;
  std::uint64_t fp = 0;
  double y = 0.0;
  std::size_t i = 0;
  while (i < samples.size()) {
    const float s = samples[i].score;
    for (; i < samples.size() && samples[i].score == s; ++i) {
      if (samples[i].negative) ++fp;
      else y += samples[i].weight;
    }
    const double x = static_cast<double>(fp) / static_cast<double>(negatives);
    if (x >= limit) {
      if (x > x0) {
        const double y_at = y0 + (y - y0) * (limit - x0) / (x - x0);
        area += (limit - x0) * (y0 + y_at) / 2.0;
      }
      return area / limit;
    }
    area += (x - x0) * (y0 + y) / 2.0;
    x0 = x;
    y0 = y;
  }
  return area / limit;
}

void check_limit(double limit) {
  if (!(limit > 0.0 && limit <= 1.0)) throw std::invalid_argument("FPR limit must be in (0, 1]");
}

}  // namespace

double auroc_fpr_limit(const std::vector<FloatMap>& scores, const std::vector<BoolMap>& gt, double limit) {
  check_limit(limit);
  check_pairs(scores, gt, "auroc_fpr_limit");
  std::uint64_t pos = 0, neg = 0;
  for (const auto& g : gt) {
    for (auto v : g.data) (v ? pos : neg)++;
  }
  if (pos == 0 || neg == 0) throw UndefinedMetricError("auroc_fpr_limit: both classes must be present");
  std::vector<CurveSample> samples;
  samples.reserve(pos + neg);
  const double w = 1.0 / static_cast<double>(pos);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t p = 0; p < scores[i].size(); ++p) {
      samples.push_back({scores[i].data[p], gt[i].data[p] == 0, w});
    }
  }
  return limited_curve_area(std::move(samples), neg, limit);
}

std::vector<std::uint32_t> label_components(const BoolMap& mask, std::uint32_t& count) {
  std::vector<std::uint32_t> labels(mask.size(), 0);
  count = 0;
  std::vector<std::size_t> stack;
  const auto rows = static_cast<std::ptrdiff_t>(mask.rows);
  const auto cols = static_cast<std::ptrdiff_t>(mask.cols);
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask.data[start] || labels[start]) continue;
    labels[start] = ++count;
    stack.push_back(start);
    while (!stack.empty()) {
      const auto i = static_cast<std::ptrdiff_t>(stack.back());
      stack.pop_back();
      const std::ptrdiff_t y = i / cols, x = i % cols;
      for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
          const std::ptrdiff_t yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= rows || xx < 0 || xx >= cols) continue;
          const auto j = static_cast<std::size_t>(yy * cols + xx);
          if (mask.data[j] && !labels[j]) {
            labels[j] = count;
            stack.push_back(j);
          }
        }
      }
    }
  }
  return labels;
}

double aupro_fpr_limit(const std::vector<FloatMap>& maps, const std::vector<BoolMap>& gt, double limit) {
  check_limit(limit);
  check_pairs(maps, gt, "aupro_fpr_limit");
  // PRO(t) = mean over regions of covered fraction = sum over covered GT pixels
  // of 1 / (regions * region area), so one sorted sweep gives the exact curve.
  std::vector<std::vector<std::uint32_t>> labels(maps.size());
  std::vector<std::vector<std::uint64_t>> areas(maps.size());
  std::uint64_t regions = 0, neg = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    std::uint32_t n = 0;
    labels[i] = label_components(gt[i], n);
    areas[i].assign(n + 1, 0);
    for (auto l : labels[i]) {
      if (l) ++areas[i][l];
      else ++neg;
    }
    regions += n;
  }
  if (regions == 0) throw UndefinedMetricError("aupro_fpr_limit: no anomalous ground-truth region");
  if (neg == 0) throw UndefinedMetricError("aupro_fpr_limit: no normal pixel, FPR undefined");
  std::vector<CurveSample> samples;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    for (std::size_t p = 0; p < maps[i].size(); ++p) {
      const auto l = labels[i][p];
      const double w = l ? 1.0 / (static_cast<double>(regions) * static_cast<double>(areas[i][l])) : 0.0;
      samples.push_back({maps[i].data[p], l == 0, w});
    }
  }
  return limited_curve_area(std::move(samples), neg, limit);
}

double class_f1(const std::vector<double>& image_scores, const std::vector<bool>& labels, double threshold) {
  if (image_scores.size() != labels.size()) throw ValidationError("class_f1: scores and labels differ in length");
  kernels::Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = image_scores[i] > threshold;
    if (p && labels[i]) ++c.tp;
    else if (p) ++c.fp;
    else if (labels[i]) ++c.fn;
    else ++c.tn;
  }
  return f1_from_counts(c).f1;
}

ThresholdChoice best_image_threshold(const std::vector<double>& image_scores, const std::vector<bool>& labels) {
  if (image_scores.size() != labels.size()) throw ValidationError("best_image_threshold: length mismatch");
  auto candidates = image_scores;
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  ThresholdChoice best;
  bool have = false;
  for (double t : candidates) {
    const double f = class_f1(image_scores, labels, t);
    if (!have || f > best.score.f1) {
      best.threshold = t;
      best.score.f1 = f;
      have = true;
    }
  }
  return best;
}

nlohmann::json to_json(const EvalResult& r) {
  return {{"category", r.category},
          {"split", r.split},
          {"threshold", r.threshold},
          {"threshold_frozen", r.threshold_frozen},
          {"pixel_f1", r.pixel_f1},
          {"precision", r.precision},
          {"recall", r.recall},
          {"auroc_0.05", r.auroc_limit},
          {"aupro_0.05", r.aupro_limit},
          {"class_f1", r.class_f1},
          {"image_threshold", r.image_threshold},
          {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}}},
          {"num_images", r.num_images},
          {"num_anomalous", r.num_anomalous}};
}

EvalResult eval_result_from_json(const nlohmann::json& j) {
  try {
    EvalResult r;
    r.category = j.at("category").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.threshold = j.at("threshold").get<double>();
    r.threshold_frozen = j.at("threshold_frozen").get<bool>();
    r.pixel_f1 = j.at("pixel_f1").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.auroc_limit = j.at("auroc_0.05").get<double>();
    r.aupro_limit = j.at("aupro_0.05").get<double>();
    r.class_f1 = j.at("class_f1").get<double>();
    r.image_threshold = j.at("image_threshold").get<double>();
    const auto& c = j.at("counts");
    r.counts = {c.at("tp").get<std::uint64_t>(), c.at("fp").get<std::uint64_t>(), c.at("fn").get<std::uint64_t>(),
                c.at("tn").get<std::uint64_t>()};
    r.num_images = j.at("num_images").get<std::size_t>();
    r.num_anomalous = j.at("num_anomalous").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed evaluation report: ") + e.what());
  }
}

std::string csv_header() {
  return "category,split,threshold,pixel_f1,precision,recall,auroc_0.05,aupro_0.05,class_f1,image_threshold,"
         "tp,fp,fn,tn,num_images,num_anomalous";
}

std::string csv_row(const EvalResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%s,%.9g,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.9g,%llu,%llu,%llu,%llu,%zu,%zu",
                r.category.c_str(), r.split.c_str(), r.threshold, r.pixel_f1, r.precision, r.recall, r.auroc_limit,
                r.aupro_limit, r.class_f1, r.image_threshold, static_cast<unsigned long long>(r.counts.tp),
                static_cast<unsigned long long>(r.counts.fp), static_cast<unsigned long long>(r.counts.fn),
                static_cast<unsigned long long>(r.counts.tn), r.num_images, r.num_anomalous);
  return buf;
}

}  // namespace superad
