#include "superad/config.hpp"

#include <algorithm>
#include <cstdio>

#include <openssl/sha.h>

#include "superad/errors.hpp"

namespace superad {

const std::vector<std::string>& known_categories() {
  static const std::vector<std::string> names{"can",  "fabric",    "fruit_jelly", "rice",
                                              "sheet_metal", "vial", "wallplugs",   "walnuts"};
  return names;
}

CategoryConfig default_config(std::string_view category) {
  CategoryConfig c;
  c.category = std::string(category);
  if (category == "sheet_metal") c.short_side = 448;
  c.use_fg_mask = category == "vial" || category == "wallplugs";
  c.use_hole_fill = category == "fabric" || category == "walnuts";
  return c;
}

void validate(const CategoryConfig& c, int patch_size) {
  auto fail = [&](const std::string& what) { throw ConfigError("category '" + c.category + "': " + what); };
  if (c.k_refs < 1) fail("k_refs must be >= 1");
  if (c.kernel < 1 || c.kernel % 2 == 0) fail("kernel must be odd and >= 1");
  if (c.short_side <= 0 || c.short_side % patch_size != 0) {
    fail("short_side must be a positive multiple of " + std::to_string(patch_size));
  }
  if (c.layer_indices.empty()) fail("layer_indices is empty");
  if (!std::is_sorted(c.layer_indices.begin(), c.layer_indices.end()) ||
      std::adjacent_find(c.layer_indices.begin(), c.layer_indices.end()) != c.layer_indices.end() ||
      c.layer_indices.front() < 1) {
    fail("layer_indices must be positive and strictly ascending");
  }
  if (c.pca_components != 1) fail("only one PCA component is supported");
  if (c.smoothing_sigma < 0) fail("smoothing_sigma must be >= 0");
  if (c.use_fg_mask && std::find(c.layer_indices.begin(), c.layer_indices.end(), c.mask_layer) == c.layer_indices.end()) {
    fail("mask_layer " + std::to_string(c.mask_layer) + " is not among layer_indices");
  }
}

nlohmann::json to_json(const CategoryConfig& c) {
  return {{"category", c.category},       {"short_side", c.short_side},   {"layer_indices", c.layer_indices},
          {"k_refs", c.k_refs},           {"use_fg_mask", c.use_fg_mask}, {"use_hole_fill", c.use_hole_fill},
          {"tau", c.tau},                 {"kernel", c.kernel},           {"pca_components", c.pca_components},
          {"smoothing_sigma", c.smoothing_sigma}, {"mask_layer", c.mask_layer}, {"standardize", c.standardize}};
}

CategoryConfig from_json(const nlohmann::json& j, CategoryConfig c) {
  if (!j.is_object()) throw ConfigError("category config must be an object");
  static const std::vector<std::string> allowed{"category", "short_side", "layer_indices", "k_refs",
                                                "use_fg_mask", "use_hole_fill", "tau", "kernel",
                                                "pca_components", "smoothing_sigma", "mask_layer", "standardize"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  try {
    auto take = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("category", c.category);
    take("short_side", c.short_side);
    take("layer_indices", c.layer_indices);
    take("k_refs", c.k_refs);
    take("use_fg_mask", c.use_fg_mask);
    take("use_hole_fill", c.use_hole_fill);
    take("tau", c.tau);
    take("kernel", c.kernel);
    take("pca_components", c.pca_components);
    take("smoothing_sigma", c.smoothing_sigma);
    take("mask_layer", c.mask_layer);
    take("standardize", c.standardize);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

std::string canonical_dump(const nlohmann::json& j) {
  // nlohmann::json objects are std::map backed, so keys come out sorted.
  return j.dump();
}

Digest sha256(std::string_view bytes) {
  Digest d{};
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), d.data());
  return d;
}

std::string to_hex(const Digest& digest) {
  std::string out;
  out.reserve(64);
  char buf[3];
  for (auto b : digest) {
    std::snprintf(buf, sizeof buf, "%02x", b);
    out += buf;
  }
  return out;
}

Digest bank_config_hash(const CategoryConfig& c) {
  nlohmann::json j = {{"category", c.category},
                      {"short_side", c.short_side},
                      {"layer_indices", c.layer_indices},
                      {"k_refs", c.k_refs},
                      {"use_fg_mask", c.use_fg_mask},
                      {"pca_components", c.pca_components}};
  if (c.use_fg_mask) {
    j["tau"] = c.tau;
    j["kernel"] = c.kernel;
    j["mask_layer"] = c.mask_layer;
    j["standardize"] = c.standardize;
  }
  return sha256(canonical_dump(j));
}

}  // namespace superad
