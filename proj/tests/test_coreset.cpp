#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "superad/coreset.hpp"
#include "superad/errors.hpp"
#include "superad/io.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace superad;
using superad::testing::random_features;
using superad::testing::random_matrix;

TEST_CASE("greedy coreset: hand example") {
  const Matrix pts{3, 2, {0, 0, 1, 0, 10, 0}};
  const auto sel = greedy_coreset(pts.view(), 2);
  CHECK(sel.selected == std::vector<std::size_t>{2, 0});
  // After {2}: farthest point is 0 at distance 10. After {2, 0}: point 1 at distance 1.
  CHECK(sel.radii[0] == doctest::Approx(10.0));
  CHECK(sel.radii[1] == doctest::Approx(1.0));
}

TEST_CASE("greedy coreset: k = N selects everything, final radius 0") {
  std::mt19937_64 rng(8);
  const auto pts = random_matrix(rng, 17, 3);
  const auto sel = greedy_coreset(pts.view(), 17);
  std::set<std::size_t> uniq(sel.selected.begin(), sel.selected.end());
  CHECK(uniq.size() == 17);
  CHECK(sel.radii.back() == 0.0);
}

TEST_CASE("greedy coreset: argument errors") {
  const Matrix pts{2, 1, {0, 1}};
  CHECK_THROWS_AS(greedy_coreset(pts.view(), 3), std::invalid_argument);
  CHECK_THROWS_AS(greedy_coreset(pts.view(), 0), std::invalid_argument);
  const Matrix empty{0, 1, {}};
  CHECK_THROWS_AS(greedy_coreset(empty.view(), 1), DataError);
}

TEST_CASE("greedy coreset matches the brute-force oracle, radii non-increasing") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 64, d = 1 + rng() % 8, k = 1 + rng() % n;
    const auto pts = random_matrix(rng, n, d);
    const auto sel = greedy_coreset(pts.view(), k);
    const auto expected = superad::testing::coreset_oracle(pts, k);
    REQUIRE(sel.selected == expected.selected);
    for (std::size_t i = 0; i < k; ++i) CHECK(sel.radii[i] == doctest::Approx(expected.radii[i]).epsilon(1e-12));
    CHECK(std::is_sorted(sel.radii.rbegin(), sel.radii.rend()));
    CHECK((sel.radii.back() == 0.0) == (k == n));
  }
}

TEST_CASE("greedy coreset with duplicates: ties go to the lowest index") {
  // Two distinct points, each duplicated; k = 3 must take first occurrences first.
  const Matrix pts{4, 1, {5, 5, -5, -5}};
  const auto sel = greedy_coreset(pts.view(), 3);
  CHECK(sel.selected == std::vector<std::size_t>{0, 2, 1});
  CHECK(sel.radii == std::vector<double>{10.0, 0.0, 0.0});
}

// Two points are equidistant from their centroid, so n starts at 3.
TEST_CASE("greedy coreset is permutation equivariant for distinct distances") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + rng() % 40, d = 1 + rng() % 5, k = 1 + rng() % n;
    const auto pts = random_matrix(rng, n, d);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix shuffled{n, d, std::vector<float>(n * d)};
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(pts.values.begin() + perm[i] * d, d, shuffled.values.begin() + i * d);
    }
    const auto a = greedy_coreset(pts.view(), k);
    const auto b = greedy_coreset(shuffled.view(), k);
    for (std::size_t i = 0; i < k; ++i) CHECK(perm[b.selected[i]] == a.selected[i]);
  }
}

TEST_CASE("select_references") {
  std::mt19937_64 rng(19);
  std::vector<ImageFeatures> train;
  for (int i = 0; i < 16; ++i) train.push_back(random_features(rng, 2, 2, 4, {6}, "t" + std::to_string(i)));
  auto ids = select_references(train, 16);
  std::set<std::string> uniq(ids.begin(), ids.end());
  CHECK(uniq.size() == 16);
  CHECK_THROWS_AS(select_references(train, 17), std::invalid_argument);

  SUBCASE("duplicated CLS vectors resolve to first occurrences") {
    std::vector<ImageFeatures> dup;
    const std::vector<std::vector<float>> distinct{{1, 0}, {-1, 0}, {0, 3}};
    for (int rep = 0; rep < 3; ++rep) {
      for (std::size_t v = 0; v < distinct.size(); ++v) {
        auto f = random_features(rng, 1, 1, 2, {6}, "d" + std::to_string(rep) + "_" + std::to_string(v));
        f.cls = distinct[v];
        dup.push_back(f);
      }
    }
    const auto sel = select_references(dup, 4);
    CHECK(sel[0] == "d0_2");
    CHECK(std::set<std::string>(sel.begin(), sel.begin() + 3) == std::set<std::string>{"d0_0", "d0_1", "d0_2"});
    CHECK(sel[3] == "d1_0");
  }

  SUBCASE("matches the oracle on CLS vectors") {
    Matrix cls{train.size(), 4, {}};
    for (const auto& f : train) cls.values.insert(cls.values.end(), f.cls.begin(), f.cls.end());
    const auto expected = superad::testing::coreset_oracle(cls, 5);
    const auto sel = select_references(train, 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(sel[i] == train[expected.selected[i]].image_id);
  }
}

namespace {

CategoryConfig small_config(std::vector<int> layers = {6, 12}) {
  auto c = default_config("can");
  c.layer_indices = std::move(layers);
  return c;
}

}  // namespace

TEST_CASE("build_memory_bank: counts, normalization, order") {
  std::mt19937_64 rng(23);
  std::vector<ImageFeatures> refs{random_features(rng, 2, 2, 5, {6, 12}, "a"), random_features(rng, 2, 2, 5, {6, 12}, "b")};
  const auto cfg = small_config();
  const auto bank = build_memory_bank(refs, std::nullopt, cfg);
  REQUIRE(bank.layers.size() == 2);
  for (const auto& l : bank.layers) {
    CHECK(l.rows.rows == 8);
    for (std::size_t r = 0; r < l.rows.rows; ++r) {
      double n = 0;
      for (float v : l.rows.row(r)) n += double(v) * v;
      CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-5);
    }
  }
  // Row 5 = second reference, patch 1.
  const auto src = refs[1].layers[0].as_matrix().row(1);
  double n = 0;
  for (float v : src) n += double(v) * v;
  CHECK(bank.layers[0].rows.row(5)[0] == doctest::Approx(src[0] / std::sqrt(n)));
  CHECK(bank.source_ids == std::vector<std::string>{"a", "b"});
  CHECK(bank == build_memory_bank(refs, std::nullopt, cfg));

  SUBCASE("mask keeps 3 of 4 patches on the first reference") {
    ForegroundMask m1, m2;
    m1.grid = BoolMap(2, 2, 1);
    m1.grid(1, 1) = 0;
    m2.grid = BoolMap(2, 2, 1);
    const auto masked = build_memory_bank(refs, std::vector{m1, m2}, cfg);
    for (const auto& l : masked.layers) CHECK(l.rows.rows == 7);
  }

  SUBCASE("an empty mask falls back to the full grid with a warning") {
    ForegroundMask m1, m2;
    m1.grid = BoolMap(2, 2, 0);
    m2.grid = BoolMap(2, 2, 1);
    const auto masked = build_memory_bank(refs, std::vector{m1, m2}, cfg);
    CHECK(masked.layers[0].rows.rows == 8);
    REQUIRE(masked.warnings.size() == 1);
    CHECK(masked.warnings[0].find("'a'") != std::string::npos);
  }

  SUBCASE("zero vectors are dropped") {
    auto z = refs;
    std::fill_n(z[0].layers[0].values.begin(), 5, 0.0f);
    const auto b = build_memory_bank(z, std::nullopt, cfg);
    CHECK(b.layers[0].rows.rows == 7);
    CHECK(b.layers[1].rows.rows == 8);
  }

  SUBCASE("dim mismatch is a validation error") {
    auto bad = refs;
    bad[1] = random_features(rng, 2, 2, 6, {6, 12}, "c");
    CHECK_THROWS_AS(build_memory_bank(bad, std::nullopt, cfg), ValidationError);
  }

  SUBCASE("mask shape mismatch is a validation error") {
    ForegroundMask m;
    m.grid = BoolMap(3, 2, 1);
    CHECK_THROWS_AS(build_memory_bank(refs, std::vector{m, m}, cfg), ValidationError);
  }
}

TEST_CASE("bank file round trip") {
  std::mt19937_64 rng(29);
  std::vector<ImageFeatures> refs{random_features(rng, 3, 2, 4, {6, 12}, "x"), random_features(rng, 3, 2, 4, {6, 12}, "y")};
  ForegroundMask empty, full;
  empty.grid = BoolMap(3, 2, 0);
  full.grid = BoolMap(3, 2, 1);
  const auto bank = build_memory_bank(refs, std::vector{empty, full}, small_config());
  const auto dir = superad::testing::fresh_temp_dir("bank_roundtrip");
  write_bank(bank, dir / "bank.sadb");
  CHECK(read_bank(dir / "bank.sadb") == bank);

  auto bytes = encode_bank(bank);
  bytes[3] = 'X';
  CHECK_THROWS_AS(decode_bank(bytes), FormatError);
  bytes = encode_bank(bank);
  bytes.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_bank(bytes), CorruptionError);

  auto nan_bank = bank;
  nan_bank.layers[1].rows.values[2] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(decode_bank(encode_bank(nan_bank)), ValidationError);
}

TEST_CASE("anomaly map files") {
  const auto dir = superad::testing::fresh_temp_dir("anom");
  FloatMap m(2, 3, 0.5f);
  m(1, 2) = 1.75f;
  io::write_anomaly_map(dir / "m.anom", m);
  CHECK(io::read_anomaly_map(dir / "m.anom") == m);
  CHECK(io::read_file(dir / "m.anom").size() == 8 + 6 * 4);

  std::filesystem::resize_file(dir / "m.anom", 8 + 5 * 4);
  try {
    io::read_anomaly_map(dir / "m.anom");
    FAIL("expected an error");
  } catch (const CorruptionError& e) {
    CHECK(std::string(e.what()).find("m.anom") != std::string::npos);
  }
  m(0, 0) = std::numeric_limits<float>::infinity();
  io::write_anomaly_map(dir / "inf.anom", m);
  CHECK_THROWS_AS(io::read_anomaly_map(dir / "inf.anom"), ValidationError);
}
