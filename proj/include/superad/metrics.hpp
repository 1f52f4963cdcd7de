#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "superad/grid.hpp"
#include "superad/kernels.hpp"

namespace superad {

struct F1Score {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  kernels::Confusion counts;
};

/// Derived precision/recall/F1; a zero denominator yields 0.
F1Score f1_from_counts(const kernels::Confusion& counts);

/// Micro-averaged over all pixels of all pairs. Throws ValidationError on shape mismatch.
F1Score pixel_f1(const std::vector<BoolMap>& pred, const std::vector<BoolMap>& gt);

struct ThresholdChoice {
  double threshold = 0.0;
  F1Score score;
};

/// Candidate thresholds for a pooled score set: every unique value when there
/// are at most 1024 of them, otherwise 1024 nearest-rank quantiles; the pooled
/// max is always included. Sorted ascending, unique.
std::vector<double> threshold_candidates(std::vector<float> pooled);

/// Threshold maximizing micro F1 of (score > t) over the candidates, with
/// optional hole filling of each binarized map. Ties go to the smallest threshold.
/// Throws UndefinedMetricError when no ground-truth pixel is positive.
ThresholdChoice best_threshold(const std::vector<FloatMap>& maps, const std::vector<BoolMap>& gt, bool hole_fill);

/// Binarizes (score > t), hole-filling when asked.
BoolMap binarize(const FloatMap& map, double threshold, bool hole_fill);

/// Area under TPR vs FPR for FPR in [0, limit], normalized by limit.
double auroc_fpr_limit(const std::vector<FloatMap>& scores, const std::vector<BoolMap>& gt, double limit = 0.05);

/// Area under per-region overlap vs FPR for FPR in [0, limit], normalized by
/// limit. Regions are 8-connected ground-truth components of each image.
double aupro_fpr_limit(const std::vector<FloatMap>& maps, const std::vector<BoolMap>& gt, double limit = 0.05);

/// Image-level F1 with anomalous as the positive class.
double class_f1(const std::vector<double>& image_scores, const std::vector<bool>& labels, double threshold);

/// Image threshold maximizing class_f1 over all unique scores; ties to the smallest.
ThresholdChoice best_image_threshold(const std::vector<double>& image_scores, const std::vector<bool>& labels);

/// Labels 8-connected components of `mask`; 0 is background, components are 1..n.
std::vector<std::uint32_t> label_components(const BoolMap& mask, std::uint32_t& count);

struct EvalResult {
  std::string category;
  std::string split;
  double threshold = 0.0;
  bool threshold_frozen = false;
  double pixel_f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double auroc_limit = 0.0;
  double aupro_limit = 0.0;
  double class_f1 = 0.0;
  double image_threshold = 0.0;
  kernels::Confusion counts;
  std::size_t num_images = 0;
  std::size_t num_anomalous = 0;
};

nlohmann::json to_json(const EvalResult& r);
EvalResult eval_result_from_json(const nlohmann::json& j);
std::string csv_header();
std::string csv_row(const EvalResult& r);

}  // namespace superad
