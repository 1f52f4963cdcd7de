#include "superad/coreset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "superad/errors.hpp"
#include "superad/io.hpp"
#include "superad/kernels.hpp"

namespace superad {

namespace {

// First index holding the maximum; `skip` marks entries that cannot be picked.
std::size_t argmax_lowest(std::span<const double> values, const std::vector<bool>& skip) {
  std::size_t best = values.size();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (skip[i]) continue;
    if (best == values.size() || values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace

CoresetSelection greedy_coreset(MatrixView points, std::size_t k) {
  const std::size_t n = points.rows;
  if (n == 0) throw DataError("greedy_coreset: empty point set");
  if (k < 1 || k > n) {
    throw std::invalid_argument("greedy_coreset: k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  const std::size_t d = points.cols;

  std::vector<double> centroid(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) centroid[c] += points.values[i * d + c];
  }
  for (auto& c : centroid) c /= static_cast<double>(n);

  std::vector<double> to_centroid(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = static_cast<double>(points.values[i * d + c]) - centroid[c];
      acc += diff * diff;
    }
    to_centroid[i] = std::sqrt(acc);
  }

  CoresetSelection out;
  std::vector<bool> taken(n, false);
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::size_t pick = argmax_lowest(to_centroid, taken);
  for (std::size_t step = 0; step < k; ++step) {
    out.selected.push_back(pick);
    taken[pick] = true;
    kernels::update_min_distance_omp(points, pick, min_dist);
    double radius = 0.0;
    for (double v : min_dist) radius = std::max(radius, v);
    out.radii.push_back(radius);
    if (step + 1 < k) pick = argmax_lowest(min_dist, taken);
  }
  return out;
}

std::vector<std::string> select_references(const std::vector<ImageFeatures>& train, std::size_t k) {
  if (train.size() < k) {
    throw std::invalid_argument("select_references: " + std::to_string(train.size()) +
                                " training images, fewer than k = " + std::to_string(k));
  }
  if (train.empty()) throw DataError("select_references: no training images");
  Matrix cls;
  cls.rows = train.size();
  cls.cols = train.front().cls.size();
  cls.values.reserve(cls.rows * cls.cols);
  for (const auto& f : train) {
    if (f.cls.size() != cls.cols) throw ValidationError("select_references: CLS length differs for '" + f.image_id + "'");
    cls.values.insert(cls.values.end(), f.cls.begin(), f.cls.end());
  }
  const auto sel = greedy_coreset(cls.view(), k);
  std::vector<std::string> ids;
  ids.reserve(k);
  for (auto i : sel.selected) ids.push_back(train[i].image_id);
  return ids;
}

const BankLayer* MemoryBank::find_layer(int layer_index) const {
  for (const auto& l : layers) {
    if (l.layer_index == layer_index) return &l;
  }
  return nullptr;
}

MemoryBank build_memory_bank(const std::vector<ImageFeatures>& refs,
                             const std::optional<std::vector<ForegroundMask>>& masks,
                             const CategoryConfig& config) {
  if (refs.empty()) throw DataError("build_memory_bank: no reference images");
  if (masks && masks->size() != refs.size()) throw ValidationError("build_memory_bank: one mask per reference expected");

  MemoryBank bank;
  bank.category = config.category;
  bank.config_hash = bank_config_hash(config);
  const std::size_t dim = refs.front().cls.size();

  // Which grid cells each reference contributes.
  std::vector<std::vector<unsigned char>> keep(refs.size());
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const auto& ref = refs[r];
    bank.source_ids.push_back(ref.image_id);
    if (ref.cls.size() != dim) throw ValidationError("build_memory_bank: dim mismatch for '" + ref.image_id + "'");
    const auto* first = ref.find_layer(config.layer_indices.front());
    if (first == nullptr) throw ValidationError("build_memory_bank: '" + ref.image_id + "' lacks configured layers");
    const std::size_t cells = first->num_patches();
    keep[r].assign(cells, 1);
    if (!masks) continue;
    const auto& m = (*masks)[r];
    if (m.grid.rows != first->grid_h || m.grid.cols != first->grid_w) {
      throw ValidationError("build_memory_bank: mask shape does not match the grid of '" + ref.image_id + "'");
    }
    if (std::none_of(m.grid.data.begin(), m.grid.data.end(), [](unsigned char v) { return v != 0; })) {
      bank.warnings.push_back("foreground mask of '" + ref.image_id + "' is empty; using the full grid");
      continue;
    }
    keep[r] = m.grid.data;
  }

  for (int layer_index : config.layer_indices) {
    BankLayer layer;
    layer.layer_index = layer_index;
    layer.rows.cols = dim;
    for (std::size_t r = 0; r < refs.size(); ++r) {
      const auto* grid = refs[r].find_layer(layer_index);
      if (grid == nullptr) {
        throw ValidationError("build_memory_bank: '" + refs[r].image_id + "' has no layer " + std::to_string(layer_index));
      }
      if (grid->dim != dim) throw ValidationError("build_memory_bank: dim mismatch in '" + refs[r].image_id + "'");
      if (grid->num_patches() != keep[r].size()) {
        throw ValidationError("build_memory_bank: grid size differs across layers of '" + refs[r].image_id + "'");
      }
      const auto view = grid->as_matrix();
      for (std::size_t p = 0; p < view.rows; ++p) {
        if (!keep[r][p]) continue;
        const auto v = view.row(p);
        double norm = 0.0;
        for (float x : v) norm += static_cast<double>(x) * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        for (float x : v) layer.rows.values.push_back(static_cast<float>(x / norm));
        ++layer.rows.rows;
      }
    }
    if (layer.rows.rows == 0) throw DataError("build_memory_bank: layer " + std::to_string(layer_index) + " is empty");
    bank.layers.push_back(std::move(layer));
  }
  return bank;
}

namespace {
constexpr char kBankMagic[4] = {'S', 'A', 'D', 'B'};
constexpr std::uint16_t kBankVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_bank(const MemoryBank& bank) {
  io::ByteWriter w;
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(kBankMagic), 4});
  w.put<std::uint16_t>(kBankVersion);
  w.put_bytes(bank.config_hash);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(bank.category.size()));
  w.put_string(bank.category);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(bank.dim()));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(bank.layers.size()));
  for (const auto& l : bank.layers) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(l.layer_index));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.rows.rows));
    w.put_floats(l.rows.values);
  }
  return w.take();
}

MemoryBank decode_bank(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  const auto magic = r.get_bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), reinterpret_cast<const std::uint8_t*>(kBankMagic))) {
    throw FormatError("not a SADB bank file (bad magic)");
  }
  const auto version = r.get<std::uint16_t>("version");
  if (version != kBankVersion) throw FormatError("unsupported SADB version " + std::to_string(version));
  MemoryBank bank;
  const auto hash = r.get_bytes(32, "config hash");
  std::copy(hash.begin(), hash.end(), bank.config_hash.begin());
  bank.category = r.get_string(r.get<std::uint32_t>("category length"), "category");
  const auto dim = r.get<std::uint32_t>("dim");
  const auto n_layers = r.get<std::uint8_t>("layer count");
  if (dim == 0 || n_layers == 0) throw ValidationError("SADB: empty bank");
  for (std::uint8_t i = 0; i < n_layers; ++i) {
    BankLayer l;
    l.layer_index = r.get<std::uint16_t>("layer index");
    l.rows.rows = r.get<std::uint32_t>("row count");
    l.rows.cols = dim;
    if (l.rows.rows == 0) throw ValidationError("SADB: layer " + std::to_string(l.layer_index) + " has no rows");
    if (std::uint64_t{l.rows.rows} * dim > r.remaining() / sizeof(float)) {
      throw CorruptionError("SADB: truncated in layer " + std::to_string(l.layer_index));
    }
    l.rows.values = r.get_floats(l.rows.rows * dim, "bank rows");
    if (!std::all_of(l.rows.values.begin(), l.rows.values.end(), [](float v) { return std::isfinite(v); })) {
      throw ValidationError("SADB: non-finite value in layer " + std::to_string(l.layer_index));
    }
    bank.layers.push_back(std::move(l));
  }
  if (r.remaining() != 0) throw CorruptionError("SADB: trailing bytes");
  return bank;
}

namespace {
std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".sources.jsonl";
  return p;
}
}  // namespace

void write_bank(const MemoryBank& bank, const std::filesystem::path& path) {
  std::string lines;
  for (std::size_t i = 0; i < bank.source_ids.size(); ++i) {
    lines += nlohmann::json{{"index", i}, {"image_id", bank.source_ids[i]}}.dump() + "\n";
  }
  for (const auto& w : bank.warnings) lines += nlohmann::json{{"warning", w}}.dump() + "\n";
  io::write_file_atomic(path, encode_bank(bank));
  io::write_text_atomic(sidecar_path(path), lines);
}

MemoryBank read_bank(const std::filesystem::path& path) {
  MemoryBank bank;
  try {
    bank = decode_bank(io::read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    const auto bytes = io::read_file(side);
    std::string text(bytes.begin(), bytes.end());
    std::size_t start = 0;
    while (start < text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      if (end > start) {
        const auto j = nlohmann::json::parse(text.substr(start, end - start), nullptr, false);
        if (j.is_discarded()) throw CorruptionError(side.string() + ": malformed line");
        if (j.contains("image_id")) bank.source_ids.push_back(j["image_id"].get<std::string>());
        if (j.contains("warning")) bank.warnings.push_back(j["warning"].get<std::string>());
      }
      start = end + 1;
    }
  }
  return bank;
}

}  // namespace superad
