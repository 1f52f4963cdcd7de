#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "superad/config.hpp"
#include "superad/metrics.hpp"

namespace superad {

inline constexpr const char* kToolVersion = "0.1.0";

/// Where things live on disk. Every directory name is configurable.
struct DatasetLayout {
  std::string train_split = "train";
  std::string gt_dir = "ground_truth";
  std::string gt_suffix = "_mask.png";
  std::string good_dir = "good";
};

struct RunManifest {
  std::filesystem::path dataset_root;
  std::filesystem::path features_root;
  std::filesystem::path output_root;
  std::vector<std::string> categories;
  std::map<std::string, CategoryConfig> configs;
  DatasetLayout layout;

  [[nodiscard]] const CategoryConfig& config(const std::string& category) const;
  /// Hash of the canonical form of all category configs.
  [[nodiscard]] std::string config_hash() const;

  [[nodiscard]] std::filesystem::path bank_path(const std::string& category) const;
  [[nodiscard]] std::filesystem::path maps_dir(const std::string& category, const std::string& split) const;
  [[nodiscard]] std::filesystem::path score_index_path(const std::string& category, const std::string& split) const;
  [[nodiscard]] std::filesystem::path report_path(const std::string& category, const std::string& split) const;
};

/// Builds a manifest from an optional JSON config document. Missing keys take
/// the per-category defaults. Throws ConfigError on unknown categories or bad values.
RunManifest load_manifest(const std::optional<std::filesystem::path>& config_file);
RunManifest manifest_from_json(const nlohmann::json& doc);

/// Sorted list of `.sadf` files under `<features_root>/<category>/<split>`.
std::vector<std::filesystem::path> list_feature_files(const RunManifest& m, const std::string& category,
                                                      const std::string& split);

struct BankBuildSummary {
  std::filesystem::path bank_path;
  std::vector<std::string> selected;
  std::vector<std::string> warnings;
};

BankBuildSummary cmd_build_bank(const RunManifest& m, const std::string& category);

struct ScoreOutput {
  std::string image_id;
  std::string relative;  // feature path relative to the split root, without extension
  float image_score = 0.0f;
};

struct ScoreRunOptions {
  std::optional<double> sigma;
  bool debug_maps = false;
};

/// Scores every feature file of the split; writes `.anom` maps and a JSON-lines index.
/// Throws ConfigError when the bank was built with a different configuration.
std::vector<ScoreOutput> cmd_score(const RunManifest& m, const std::string& category, const std::string& split,
                                   const ScoreRunOptions& options);

struct EvaluateOptions {
  std::optional<double> threshold;
  // Reuse the pixel and image thresholds of this split's report.
  std::optional<std::string> frozen_from;
  double fpr_limit = 0.05;
  bool write_masks = true;
};

EvalResult cmd_evaluate(const RunManifest& m, const std::string& category, const std::string& split,
                        const EvaluateOptions& options);

struct OverlayOptions {
  std::optional<double> threshold;  // default: half the map maximum
  std::optional<double> vmax;       // default: the map maximum
};

/// Heatmap overlay next to the thresholded mask, as one PNG twice as wide as the image.
void cmd_overlay(const std::filesystem::path& map_file, const std::filesystem::path& image_file,
                 const std::filesystem::path& out, const OverlayOptions& options);

struct ReportTable {
  std::vector<EvalResult> rows;
  EvalResult mean;  // arithmetic mean of the metric columns
};

/// Collects per-category reports for a split and appends a mean row.
ReportTable cmd_report(const RunManifest& m, const std::string& split);

/// Arithmetic mean of the metric fields; counts are summed.
EvalResult mean_row(const std::vector<EvalResult>& rows);

}  // namespace superad
