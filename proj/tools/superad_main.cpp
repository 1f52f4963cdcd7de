// superad: memory-bank anomaly segmentation over pre-extracted feature files.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "superad/errors.hpp"
#include "superad/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct CommonArgs {
  std::string config;
  std::string dataset_root;
  std::string features_root;
  std::string output;
  std::vector<std::string> categories;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "JSON config document");
  cmd->add_option("--dataset-root", args.dataset_root, "Dataset root (<root>/<category>/...)");
  cmd->add_option("--features-root", args.features_root, "Feature root holding .sadf files");
  cmd->add_option("--output", args.output, "Output root");
  cmd->add_option("--category", args.categories, "Category to process (repeatable; default: all configured)");
}

superad::RunManifest make_manifest(const CommonArgs& args) {
  auto m = superad::load_manifest(args.config.empty() ? std::nullopt : std::optional<std::filesystem::path>(args.config));
  if (!args.dataset_root.empty()) m.dataset_root = args.dataset_root;
  if (!args.features_root.empty()) m.features_root = args.features_root;
  if (!args.output.empty()) m.output_root = args.output;
  if (m.output_root.empty()) throw superad::ConfigError("no output root (--output or config output_root)");
  if (!args.categories.empty()) {
    for (const auto& c : args.categories) (void)m.config(c);
    m.categories = args.categories;
  }
  return m;
}

void apply_worker_limit() {
#ifdef _OPENMP
  if (const char* env = std::getenv("SUPERAD_WORKERS")) {
    const int n = std::atoi(env);
    if (n <= 0) throw superad::ConfigError("SUPERAD_WORKERS must be a positive integer");
    omp_set_num_threads(n);
  }
#endif
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free anomaly segmentation with multi-layer patch memory banks"};
  app.set_version_flag("--version", superad::kToolVersion);
  app.require_subcommand(1);

  CommonArgs common;
  std::string split = "test_public";
  std::optional<double> threshold;
  std::optional<double> sigma;
  std::optional<std::string> frozen_from;
  std::optional<double> vmax;
  bool debug_maps = false;
  bool no_masks = false;
  std::string map_file, image_file, out_file;

  auto* build = app.add_subcommand("build-bank", "Select references and build per-category memory banks");
  add_common(build, common);

  auto* score = app.add_subcommand("score", "Score every image of a split against the bank");
  add_common(score, common);
  score->add_option("--split", split, "Split directory name")->capture_default_str();
  score->add_option("--sigma", sigma, "Gaussian smoothing sigma in pixels (overrides config)");
  score->add_flag("--debug-maps", debug_maps, "Also write per-layer grid maps");

  auto* evaluate = app.add_subcommand("evaluate", "Threshold sweep and metrics against ground truth");
  add_common(evaluate, common);
  evaluate->add_option("--split", split, "Split directory name")->capture_default_str();
  evaluate->add_option("--threshold", threshold, "Fixed pixel threshold (skips the sweep)");
  evaluate->add_option("--frozen-from", frozen_from, "Reuse thresholds from this split's report");
  evaluate->add_flag("--no-masks", no_masks, "Do not write binarized mask PNGs");

  auto* overlay = app.add_subcommand("overlay", "Render a heatmap overlay and thresholded mask");
  overlay->add_option("map", map_file, ".anom map file")->required();
  overlay->add_option("image", image_file, "PNG image of the same size")->required();
  overlay->add_option("out", out_file, "Output PNG")->required();
  overlay->add_option("--threshold", threshold, "Mask threshold (default: half the map maximum)");
  overlay->add_option("--vmax", vmax, "Score mapped to full color (default: map maximum)");

  auto* report = app.add_subcommand("report", "Collect per-category reports into one table with a mean row");
  add_common(report, common);
  report->add_option("--split", split, "Split directory name")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    apply_worker_limit();
    if (*overlay) {
      superad::cmd_overlay(map_file, image_file, out_file, {threshold, vmax});
      return 0;
    }
    const auto manifest = make_manifest(common);
    if (*build) {
      for (const auto& c : manifest.categories) {
        const auto summary = superad::cmd_build_bank(manifest, c);
        std::cout << c << "\t" << summary.bank_path.string() << "\n";
      }
    } else if (*score) {
      for (const auto& c : manifest.categories) {
        const auto outputs = superad::cmd_score(manifest, c, split, {sigma, debug_maps});
        std::cout << c << "\t" << outputs.size() << " images\t" << manifest.score_index_path(c, split).string() << "\n";
      }
    } else if (*evaluate) {
      superad::EvaluateOptions opts;
      opts.threshold = threshold;
      opts.frozen_from = frozen_from;
      opts.write_masks = !no_masks;
      for (const auto& c : manifest.categories) {
        const auto r = superad::cmd_evaluate(manifest, c, split, opts);
        std::cout << superad::csv_row(r) << "\n";
      }
    } else if (*report) {
      const auto table = superad::cmd_report(manifest, split);
      std::printf("%-12s %10s %10s %10s %10s\n", "category", "F1", "AU-ROC.05", "AU-PRO.05", "ClassF1");
      auto print = [](const superad::EvalResult& r) {
        std::printf("%-12s %10.2f %10.2f %10.2f %10.2f\n", r.category.c_str(), 100 * r.pixel_f1, 100 * r.auroc_limit,
                    100 * r.aupro_limit, 100 * r.class_f1);
      };
      for (const auto& r : table.rows) print(r);
      print(table.mean);
    }
    return 0;
  } catch (const superad::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const superad::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
