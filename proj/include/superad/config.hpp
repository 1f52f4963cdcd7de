#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace superad {

using Digest = std::array<std::uint8_t, 32>;

/// Per-category pipeline parameters.
struct CategoryConfig {
  std::string category;
  int short_side = 672;
  std::vector<int> layer_indices{6, 12, 18, 24};
  int k_refs = 16;
  bool use_fg_mask = false;
  bool use_hole_fill = false;
  double tau = 1.0;
  int kernel = 3;
  int pca_components = 1;
  double smoothing_sigma = 0.0;
  int mask_layer = 6;
  // Standardize channels (unit variance) before PCA instead of only centering.
  bool standardize = false;

  bool operator==(const CategoryConfig&) const = default;
};

/// The eight MVTec AD 2 categories, in the order reports list them.
const std::vector<std::string>& known_categories();

/// Defaults used for the challenge runs: 448 px short side for sheet_metal,
/// foreground masking for vial and wallplugs, hole filling for fabric and walnuts.
CategoryConfig default_config(std::string_view category);

/// Throws ConfigError on a violated invariant.
void validate(const CategoryConfig& config, int patch_size = 14);

nlohmann::json to_json(const CategoryConfig& config);
/// Fields absent from `j` keep the values already in `base`.
CategoryConfig from_json(const nlohmann::json& j, CategoryConfig base);

std::string canonical_dump(const nlohmann::json& j);
Digest sha256(std::string_view bytes);
std::string to_hex(const Digest& digest);

/// Digest of the fields that determine the memory bank contents.
Digest bank_config_hash(const CategoryConfig& config);

}  // namespace superad
