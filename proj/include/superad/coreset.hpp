#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "superad/config.hpp"
#include "superad/feature_store.hpp"
#include "superad/fg_mask.hpp"
#include "superad/grid.hpp"

namespace superad {

struct CoresetSelection {
  std::vector<std::size_t> selected;
  // radii[i]: covering radius of the first i + 1 selected points
  std::vector<double> radii;
};

/// Greedy k-center selection. The first pick is the point farthest from the
/// centroid; each next pick is the point farthest from the selected set. Ties go
/// to the lowest index. Distances are exact Euclidean.
/// Throws DataError for an empty point set and std::invalid_argument unless 1 <= k <= N.
CoresetSelection greedy_coreset(MatrixView points, std::size_t k);

/// Image ids of the k-center coreset over the CLS vectors, in selection order.
std::vector<std::string> select_references(const std::vector<ImageFeatures>& train, std::size_t k);

struct BankLayer {
  int layer_index = 0;
  Matrix rows;  // unit-norm patch vectors
  bool operator==(const BankLayer&) const = default;
};

struct MemoryBank {
  std::string category;
  std::vector<BankLayer> layers;  // ascending layer_index
  std::vector<std::string> source_ids;
  Digest config_hash{};
  // One entry per reference whose foreground mask removed every patch.
  std::vector<std::string> warnings;

  [[nodiscard]] const BankLayer* find_layer(int layer_index) const;
  [[nodiscard]] std::size_t dim() const { return layers.empty() ? 0 : layers.front().rows.cols; }
  bool operator==(const MemoryBank&) const = default;
};

/// Collects the configured layers of every reference into per-layer banks.
/// Rows follow reference order, then row-major grid order. Patches outside a
/// reference's mask are skipped (a mask with no patch left falls back to the
/// full grid and records a warning); zero vectors are dropped.
MemoryBank build_memory_bank(const std::vector<ImageFeatures>& refs,
                             const std::optional<std::vector<ForegroundMask>>& masks,
                             const CategoryConfig& config);

/// SADB bytes: magic, u16 version, 32-byte config hash, category, dim, layers.
std::vector<std::uint8_t> encode_bank(const MemoryBank& bank);
MemoryBank decode_bank(std::span<const std::uint8_t> bytes);

/// Writes `<path>` and the `<path>.sources.jsonl` sidecar.
void write_bank(const MemoryBank& bank, const std::filesystem::path& path);
MemoryBank read_bank(const std::filesystem::path& path);

}  // namespace superad
