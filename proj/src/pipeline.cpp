#include "superad/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "superad/coreset.hpp"
#include "superad/errors.hpp"
#include "superad/feature_store.hpp"
#include "superad/fg_mask.hpp"
#include "superad/io.hpp"
#include "superad/scorer.hpp"

namespace fs = std::filesystem;

namespace superad {

const CategoryConfig& RunManifest::config(const std::string& category) const {
  const auto it = configs.find(category);
  if (it == configs.end()) throw ConfigError("no configuration for category '" + category + "'");
  return it->second;
}

std::string RunManifest::config_hash() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, cfg] : configs) j[name] = to_json(cfg);
  return to_hex(sha256(canonical_dump(j)));
}

fs::path RunManifest::bank_path(const std::string& category) const { return output_root / category / "bank.sadb"; }

fs::path RunManifest::maps_dir(const std::string& category, const std::string& split) const {
  return output_root / category / "maps" / split;
}

fs::path RunManifest::score_index_path(const std::string& category, const std::string& split) const {
  return output_root / category / ("scores_" + split + ".jsonl");
}

fs::path RunManifest::report_path(const std::string& category, const std::string& split) const {
  return output_root / category / ("eval_" + split + ".json");
}

RunManifest manifest_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  static const std::vector<std::string> allowed{"dataset_root", "features_root", "output_root", "categories",
                                                "defaults",     "category_overrides", "layout"};
  for (const auto& [key, _] : doc.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown top-level config key '" + key + "'");
    }
  }
  RunManifest m;
  try {
    if (doc.contains("dataset_root")) m.dataset_root = doc["dataset_root"].get<std::string>();
    if (doc.contains("features_root")) m.features_root = doc["features_root"].get<std::string>();
    if (doc.contains("output_root")) m.output_root = doc["output_root"].get<std::string>();
    m.categories = doc.contains("categories") ? doc["categories"].get<std::vector<std::string>>() : known_categories();
    if (doc.contains("layout")) {
      const auto& l = doc["layout"];
      if (l.contains("train_split")) m.layout.train_split = l["train_split"].get<std::string>();
      if (l.contains("gt_dir")) m.layout.gt_dir = l["gt_dir"].get<std::string>();
      if (l.contains("gt_suffix")) m.layout.gt_suffix = l["gt_suffix"].get<std::string>();
      if (l.contains("good_dir")) m.layout.good_dir = l["good_dir"].get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  const auto& known = known_categories();
  const nlohmann::json overrides = doc.value("category_overrides", nlohmann::json::object());
  for (const auto& [name, _] : overrides.items()) {
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw ConfigError("unknown category '" + name + "' in category_overrides");
    }
  }
  for (const auto& name : m.categories) {
    if (std::find(known.begin(), known.end(), name) == known.end()) throw ConfigError("unknown category '" + name + "'");
    auto cfg = default_config(name);
    if (doc.contains("defaults")) cfg = from_json(doc["defaults"], cfg);
    if (overrides.contains(name)) cfg = from_json(overrides[name], cfg);
    cfg.category = name;
    validate(cfg);
    m.configs[name] = cfg;
  }
  return m;
}

RunManifest load_manifest(const std::optional<fs::path>& config_file) {
  if (!config_file) return manifest_from_json(nlohmann::json::object());
  std::vector<std::uint8_t> bytes;
  try {
    bytes = io::read_file(*config_file);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  const auto doc = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (doc.is_discarded()) throw ConfigError(config_file->string() + ": not valid JSON");
  return manifest_from_json(doc);
}

std::vector<fs::path> list_feature_files(const RunManifest& m, const std::string& category, const std::string& split) {
  const auto root = m.features_root / category / split;
  if (!fs::is_directory(root)) {
    throw DataError("feature directory not found: expected " + root.string() + " (<features_root>/" + category + "/" +
                    split + ")");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".sadf") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

namespace {

void log(const std::string& line) { std::cerr << "[superad] " << line << "\n"; }

void check_layers(const ImageFeatures& f, const CategoryConfig& cfg, const fs::path& path) {
  const auto short_side = std::min(f.resized_size.height, f.resized_size.width);
  if (static_cast<int>(short_side) != cfg.short_side) {
    throw ValidationError(path.string() + ": features extracted at short side " + std::to_string(short_side) +
                          ", config expects " + std::to_string(cfg.short_side));
  }
  for (int l : cfg.layer_indices) {
    if (f.find_layer(l) == nullptr) {
      throw ValidationError(path.string() + ": layer " + std::to_string(l) + " missing (configured layers must all be present)");
    }
  }
}

}  // namespace

BankBuildSummary cmd_build_bank(const RunManifest& m, const std::string& category) {
  const auto& cfg = m.config(category);
  const auto files = list_feature_files(m, category, m.layout.train_split);
  if (files.size() < static_cast<std::size_t>(cfg.k_refs)) {
    throw DataError(category + ": " + std::to_string(files.size()) + " training feature files under " +
                    (m.features_root / category / m.layout.train_split).string() + ", need at least k_refs = " +
                    std::to_string(cfg.k_refs));
  }

  Matrix cls;
  std::vector<std::string> ids;
  for (const auto& path : files) {
    const auto prefix = read_feature_prefix(path);
    if (cls.rows == 0) cls.cols = prefix.cls.size();
    if (prefix.cls.size() != cls.cols) throw ValidationError(path.string() + ": CLS length differs from other files");
    cls.values.insert(cls.values.end(), prefix.cls.begin(), prefix.cls.end());
    ++cls.rows;
    ids.push_back(prefix.image_id);
  }
  const auto selection = greedy_coreset(cls.view(), static_cast<std::size_t>(cfg.k_refs));

  std::vector<ImageFeatures> refs;
  std::vector<ForegroundMask> masks;
  for (auto idx : selection.selected) {
    auto f = read_feature_file(files[idx]);
    check_layers(f, cfg, files[idx]);
    if (cfg.use_fg_mask) masks.push_back(compute_foreground_mask(f, cfg));
    refs.push_back(std::move(f));
  }
  const auto bank = build_memory_bank(refs, cfg.use_fg_mask ? std::optional(masks) : std::nullopt, cfg);
  const auto path = m.bank_path(category);
  write_bank(bank, path);

  nlohmann::json sel = {{"category", category}, {"selected", nlohmann::json::array()}};
  for (std::size_t i = 0; i < selection.selected.size(); ++i) {
    nlohmann::json entry = {{"image_id", ids[selection.selected[i]]},
                            {"file", fs::relative(files[selection.selected[i]], m.features_root).generic_string()},
                            {"radius", selection.radii[i]}};
    if (cfg.use_fg_mask) {
      const auto& mk = masks[i];
      entry["fg_cells"] = std::count(mk.grid.data.begin(), mk.grid.data.end(), 1);
      entry["fg_inverted"] = mk.inverted;
      entry["fg_degenerate"] = mk.degenerate;
    }
    sel["selected"].push_back(entry);
  }
  io::write_text_atomic(m.output_root / category / "selection.json", sel.dump(2) + "\n");

  BankBuildSummary summary{path, {}, bank.warnings};
  for (auto idx : selection.selected) summary.selected.push_back(ids[idx]);
  std::ostringstream msg;
  msg << category << ": bank from " << refs.size() << " of " << files.size() << " training images, "
      << bank.layers.front().rows.rows << " rows per layer (first layer)";
  log(msg.str());
  for (const auto& w : bank.warnings) log(category + ": warning: " + w);
  return summary;
}

std::vector<ScoreOutput> cmd_score(const RunManifest& m, const std::string& category, const std::string& split,
                                   const ScoreRunOptions& options) {
  const auto& cfg = m.config(category);
  const auto bank_file = m.bank_path(category);
  if (!fs::exists(bank_file)) throw DataError(category + ": bank not found at " + bank_file.string() + " (run build-bank first)");
  const auto bank = read_bank(bank_file);
  if (bank.config_hash != bank_config_hash(cfg)) {
    throw ConfigError(category + ": bank " + bank_file.string() + " was built with config hash " + to_hex(bank.config_hash) +
                      ", current config hashes to " + to_hex(bank_config_hash(cfg)) + "; rebuild the bank");
  }
  const auto files = list_feature_files(m, category, split);
  const auto split_root = m.features_root / category / split;
  const auto out_dir = m.maps_dir(category, split);

  ScoreOptions so;
  so.smoothing_sigma = options.sigma.value_or(cfg.smoothing_sigma);
  so.keep_grid_maps = options.debug_maps;
  if (so.smoothing_sigma < 0) throw ConfigError("--sigma must be >= 0");

  std::vector<ScoreOutput> outputs;
  std::string index;
  for (const auto& path : files) {
    const auto features = read_feature_file(path);
    check_layers(features, cfg, path);
    const auto result = score_image(features, bank, cfg, so);
    auto rel = fs::relative(path, split_root);
    rel.replace_extension();
    io::write_anomaly_map(out_dir / (rel.generic_string() + ".anom"), result.full_res);
    if (options.debug_maps) {
      for (std::size_t l = 0; l < result.grid_maps.size(); ++l) {
        io::write_anomaly_map(out_dir / (rel.generic_string() + ".layer" + std::to_string(cfg.layer_indices[l]) + ".anom"),
                              result.grid_maps[l]);
      }
    }
    outputs.push_back({features.image_id, rel.generic_string(), result.image_score});
    index += nlohmann::json{{"image_id", features.image_id}, {"image_score", result.image_score}, {"map", rel.generic_string() + ".anom"}}
                 .dump() +
             "\n";
  }
  io::write_text_atomic(m.score_index_path(category, split), index);
  log(category + "/" + split + ": scored " + std::to_string(outputs.size()) + " images");
  return outputs;
}

namespace {

struct IndexEntry {
  std::string image_id;
  double image_score = 0.0;
  std::string map;  // relative to the maps dir
};

std::vector<IndexEntry> read_index(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("score index not found: " + path.string() + " (run score first)");
  const auto bytes = io::read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::vector<IndexEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("image_id") || !j.contains("image_score") || !j.contains("map")) {
      throw CorruptionError(path.string() + ": malformed index line");
    }
    out.push_back({j["image_id"].get<std::string>(), j["image_score"].get<double>(), j["map"].get<std::string>()});
  }
  return out;
}

}  // namespace

EvalResult cmd_evaluate(const RunManifest& m, const std::string& category, const std::string& split,
                        const EvaluateOptions& options) {
  const auto& cfg = m.config(category);
  const auto entries = read_index(m.score_index_path(category, split));
  if (entries.empty()) throw DataError(category + "/" + split + ": no scored images to evaluate");
  const auto maps_dir = m.maps_dir(category, split);
  const auto gt_root = m.dataset_root / category / split / m.layout.gt_dir;

  std::vector<FloatMap> maps;
  std::vector<BoolMap> gts;
  std::vector<double> image_scores;
  std::vector<bool> labels;
  std::vector<std::string> missing;
  std::vector<fs::path> rels;
  for (const auto& e : entries) {
    fs::path rel(e.map);
    rel.replace_extension();
    rels.push_back(rel);
    maps.push_back(io::read_anomaly_map(maps_dir / e.map));
    image_scores.push_back(e.image_score);
    const bool anomalous = rel.begin() != rel.end() && *rel.begin() != m.layout.good_dir;
    labels.push_back(anomalous);
    if (!anomalous) {
      gts.emplace_back(maps.back().rows, maps.back().cols, 0);
      continue;
    }
    const auto gt_path = gt_root / rel.parent_path() / (rel.filename().string() + m.layout.gt_suffix);
    if (!fs::exists(gt_path)) {
      missing.push_back(gt_path.string());
      gts.emplace_back();
      continue;
    }
    gts.push_back(io::read_mask_png(gt_path));
    if (gts.back().rows != maps.back().rows || gts.back().cols != maps.back().cols) {
      throw ValidationError(gt_path.string() + ": mask size differs from the anomaly map of '" + e.image_id + "'");
    }
  }
  if (!missing.empty()) {
    std::string msg = category + "/" + split + ": " + std::to_string(missing.size()) + " ground-truth masks missing:";
    for (const auto& p : missing) msg += "\n  " + p;
    throw DataError(msg);
  }

  EvalResult r;
  r.category = category;
  r.split = split;
  r.num_images = entries.size();
  r.num_anomalous = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));

  if (options.threshold) {
    r.threshold = *options.threshold;
    r.threshold_frozen = true;
  } else if (options.frozen_from) {
    const auto report = m.report_path(category, *options.frozen_from);
    if (!fs::exists(report)) throw DataError("frozen-threshold report not found: " + report.string());
    const auto bytes = io::read_file(report);
    const auto frozen = eval_result_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
    r.threshold = frozen.threshold;
    r.image_threshold = frozen.image_threshold;
    r.threshold_frozen = true;
  } else {
    r.threshold = best_threshold(maps, gts, cfg.use_hole_fill).threshold;
  }

  std::vector<BoolMap> preds;
  preds.reserve(maps.size());
  for (const auto& map : maps) preds.push_back(binarize(map, r.threshold, cfg.use_hole_fill));
  const auto f1 = pixel_f1(preds, gts);
  r.pixel_f1 = f1.f1;
  r.precision = f1.precision;
  r.recall = f1.recall;
  r.counts = f1.counts;

  if (f1.counts.tp + f1.counts.fn > 0 && f1.counts.fp + f1.counts.tn > 0) {
    r.auroc_limit = auroc_fpr_limit(maps, gts, options.fpr_limit);
    r.aupro_limit = aupro_fpr_limit(maps, gts, options.fpr_limit);
  } else {
    log(category + "/" + split + ": single-class pixel labels, AU-ROC/AU-PRO reported as 0");
  }

  if (!options.frozen_from) r.image_threshold = best_image_threshold(image_scores, labels).threshold;
  r.class_f1 = class_f1(image_scores, labels, r.image_threshold);

  if (options.write_masks) {
    const auto mask_dir = m.output_root / category / "masks" / split;
    for (std::size_t i = 0; i < preds.size(); ++i) io::write_mask_png(mask_dir / (rels[i].generic_string() + ".png"), preds[i]);
  }

  const auto report = m.report_path(category, split);
  io::write_text_atomic(report, to_json(r).dump(2) + "\n");
  auto csv = report;
  csv.replace_extension(".csv");
  io::write_text_atomic(csv, csv_header() + "\n" + csv_row(r) + "\n");
  std::ostringstream msg;
  msg << category << "/" << split << ": F1 " << r.pixel_f1 << " @ " << r.threshold << ", AU-ROC_0.05 " << r.auroc_limit
      << ", AU-PRO_0.05 " << r.aupro_limit << ", ClassF1 " << r.class_f1;
  log(msg.str());
  return r;
}

void cmd_overlay(const fs::path& map_file, const fs::path& image_file, const fs::path& out, const OverlayOptions& options) {
  const auto map = io::read_anomaly_map(map_file);
  const auto image = io::read_png(image_file);
  if (map.rows != image.height || map.cols != image.width) {
    std::ostringstream msg;
    msg << "overlay: map is " << map.rows << "x" << map.cols << " but image is " << image.height << "x" << image.width;
    throw ValidationError(msg.str());
  }
  const double max_score = map.empty() ? 0.0 : *std::max_element(map.data.begin(), map.data.end());
  const double vmax = options.vmax.value_or(max_score);
  const double threshold = options.threshold.value_or(0.5 * max_score);

  io::Image8 canvas{image.height, image.width * 2, 3, {}};
  canvas.pixels.assign(std::size_t{canvas.height} * canvas.width * 3, 0);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const double v = vmax > 0 ? std::clamp(map(y, x) / vmax, 0.0, 1.0) : 0.0;
      // Ramp from yellow (low) to red (high), blended with opacity 0.5 * v.
      const double color[3] = {255.0, 255.0 * (1.0 - v), 0.0};
      const double alpha = 0.5 * v;
      auto* dst = &canvas.pixels[(y * canvas.width + x) * 3];
      for (int c = 0; c < 3; ++c) {
        const std::size_t src_idx = (y * image.width + x) * image.channels + (image.channels == 3 ? c : 0);
        const double base = image.pixels[src_idx];
        dst[c] = static_cast<std::uint8_t>(std::lround(base * (1.0 - alpha) + color[c] * alpha));
      }
      const std::uint8_t mask = map(y, x) > threshold ? 255 : 0;
      auto* right = &canvas.pixels[(y * canvas.width + image.width + x) * 3];
      right[0] = right[1] = right[2] = mask;
    }
  }
  io::write_png(out, canvas);
}

EvalResult mean_row(const std::vector<EvalResult>& rows) {
  EvalResult mean;
  mean.category = "mean";
  if (rows.empty()) return mean;
  mean.split = rows.front().split;
  for (const auto& r : rows) {
    mean.pixel_f1 += r.pixel_f1;
    mean.precision += r.precision;
    mean.recall += r.recall;
    mean.auroc_limit += r.auroc_limit;
    mean.aupro_limit += r.aupro_limit;
    mean.class_f1 += r.class_f1;
    mean.counts += r.counts;
    mean.num_images += r.num_images;
    mean.num_anomalous += r.num_anomalous;
  }
  const double n = static_cast<double>(rows.size());
  mean.pixel_f1 /= n;
  mean.precision /= n;
  mean.recall /= n;
  mean.auroc_limit /= n;
  mean.aupro_limit /= n;
  mean.class_f1 /= n;
  return mean;
}

ReportTable cmd_report(const RunManifest& m, const std::string& split) {
  ReportTable table;
  for (const auto& category : m.categories) {
    const auto path = m.report_path(category, split);
    if (!fs::exists(path)) {
      log("report: no evaluation for " + category + "/" + split + " (" + path.string() + "), skipped");
      continue;
    }
    const auto bytes = io::read_file(path);
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded()) throw CorruptionError(path.string() + ": not valid JSON");
    table.rows.push_back(eval_result_from_json(j));
  }
  if (table.rows.empty()) throw DataError("report: no evaluation reports found for split '" + split + "'");
  table.mean = mean_row(table.rows);

  std::string csv = csv_header() + "\n";
  nlohmann::json doc = {{"split", split}, {"categories", nlohmann::json::array()}, {"mean", to_json(table.mean)}};
  for (const auto& r : table.rows) {
    csv += csv_row(r) + "\n";
    doc["categories"].push_back(to_json(r));
  }
  csv += csv_row(table.mean) + "\n";
  io::write_text_atomic(m.output_root / ("report_" + split + ".csv"), csv);
  io::write_text_atomic(m.output_root / ("report_" + split + ".json"), doc.dump(2) + "\n");
  return table;
}

}  // namespace superad
