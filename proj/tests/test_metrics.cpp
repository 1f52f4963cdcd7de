#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "superad/errors.hpp"
#include "superad/metrics.hpp"
#include "support/oracles.hpp"

using namespace superad;

namespace {

BoolMap from_rows(const std::vector<std::string>& rows) {
  BoolMap g(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) g(r, c) = rows[r][c] == '#';
  return g;
}

// Scores on a 1/64 lattice in [0, 2]: plenty of ties, and cubes stay exact in float.
FloatMap lattice_map(std::mt19937_64& rng, std::size_t h, std::size_t w, int levels = 129) {
  FloatMap m(h, w);
  for (auto& v : m.data) v = float(rng() % levels) / 64.0f;
  return m;
}

BoolMap random_gt(std::mt19937_64& rng, std::size_t h, std::size_t w, double p) {
  std::bernoulli_distribution bit(p);
  BoolMap g(h, w);
  for (auto& v : g.data) v = bit(rng);
  return g;
}

// Scores correlated with the labels so the curves are not trivial.
FloatMap noisy_scores(std::mt19937_64& rng, const BoolMap& gt) {
  FloatMap m(gt.rows, gt.cols);
  for (std::size_t i = 0; i < gt.size(); ++i) m.data[i] = float(rng() % 97 + (gt.data[i] ? 20 : 0)) / 64.0f;
  return m;
}

struct Instance {
  std::vector<FloatMap> maps;
  std::vector<BoolMap> gt;
};

Instance random_instance(std::mt19937_64& rng, std::size_t max_side, bool need_positive = true) {
  for (;;) {
    Instance in;
    const std::size_t n = 1 + rng() % 3;
    std::size_t pos = 0, total = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t h = 1 + rng() % max_side, w = 1 + rng() % max_side;
      in.gt.push_back(random_gt(rng, h, w, 0.05 + 0.3 * double(rng() % 4) / 3.0));
      in.maps.push_back(rng() % 3 ? noisy_scores(rng, in.gt.back()) : lattice_map(rng, h, w, 9));
      pos += std::count(in.gt.back().data.begin(), in.gt.back().data.end(), 1);
      total += h * w;
    }
    if (!need_positive || (pos > 0 && pos < total)) return in;
  }
}

}  // namespace

TEST_CASE("pixel_f1 examples") {
  const auto gt = from_rows({"##.", "#..", "..."});
  CHECK(pixel_f1({gt}, {gt}).f1 == 1.0);
  const auto none = pixel_f1({BoolMap(3, 3, 0)}, {gt});
  CHECK(none.f1 == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.precision == 0.0);

  // TP 2, FP 1, FN 1.
  const auto pred = from_rows({"##.", "...", "..#"});
  const auto s = pixel_f1({pred}, {gt});
  CHECK(s.counts.tp == 2);
  CHECK(s.counts.fp == 1);
  CHECK(s.counts.fn == 1);
  CHECK(s.counts.tn == 5);
  CHECK(s.precision == 2.0 / 3.0);
  CHECK(s.recall == 2.0 / 3.0);
  CHECK(s.f1 == 2.0 / 3.0);

  CHECK_THROWS_AS(pixel_f1({pred}, {BoolMap(3, 2, 0)}), ValidationError);
  CHECK_THROWS_AS(pixel_f1({pred, pred}, {gt}), ValidationError);
  CHECK(pixel_f1({BoolMap(2, 2, 0)}, {BoolMap(2, 2, 0)}).f1 == 0.0);
}

TEST_CASE("pixel_f1: fixing an error never lowers F1") {
  std::mt19937_64 rng(97);
  for (int trial = 0; trial < 300; ++trial) {
    const auto gt = random_gt(rng, 6, 6, 0.3);
    auto pred = random_gt(rng, 6, 6, 0.3);
    const double before = pixel_f1({pred}, {gt}).f1;
    const auto i = rng() % pred.size();
    if (pred.data[i] == gt.data[i]) continue;
    pred.data[i] = gt.data[i];
    CHECK(pixel_f1({pred}, {gt}).f1 >= before);
  }
}

TEST_CASE("threshold_candidates") {
  CHECK(threshold_candidates({3, 1, 2, 1}) == std::vector<double>{1, 2, 3});
  std::vector<float> many;
  for (int i = 0; i < 5000; ++i) many.push_back(float(i) * 0.5f);
  const auto c = threshold_candidates(many);
  CHECK(c.size() == 1024);
  CHECK(c.front() == 0.0);
  CHECK(c.back() == 2499.5);
  CHECK(std::is_sorted(c.begin(), c.end()));
  std::vector<float> exact(1024);
  for (int i = 0; i < 1024; ++i) exact[i] = float(i);
  CHECK(threshold_candidates(exact).size() == 1024);
}

TEST_CASE("best_threshold examples") {
  FloatMap m(2, 3, 0.1f);
  m(0, 0) = m(1, 2) = 0.9f;
  BoolMap gt(2, 3, 0);
  gt(0, 0) = gt(1, 2) = 1;
  const auto best = best_threshold({m}, {gt}, false);
  CHECK(best.threshold == doctest::Approx(0.1));
  CHECK(best.score.f1 == 1.0);

  SUBCASE("constant map") {
    const FloatMap flat(3, 3, 0.4f);
    const auto g = from_rows({"#..", "...", "..#"});
    // Only candidate is 0.4, which predicts nothing; F1 0.
    const auto b = best_threshold({flat}, {g}, false);
    CHECK(b.threshold == doctest::Approx(0.4));
    CHECK(b.score.f1 == 0.0);
    const double all_positive = pixel_f1({BoolMap(3, 3, 1)}, {g}).f1;
    const double all_negative = pixel_f1({BoolMap(3, 3, 0)}, {g}).f1;
    CHECK(b.score.f1 <= std::max(all_positive, all_negative));
    CHECK(b.score.f1 == all_negative);
  }

  CHECK_THROWS_AS(best_threshold({m}, {BoolMap(2, 3, 0)}, false), UndefinedMetricError);
}

TEST_CASE("best_threshold matches the exhaustive oracle") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const auto in = random_instance(rng, 8);
    for (bool fill : {false, true}) {
      const auto got = best_threshold(in.maps, in.gt, fill);
      const auto [t, f1] = superad::testing::best_f1_oracle(in.maps, in.gt, fill);
      CHECK(got.threshold == t);
      CHECK(std::abs(got.score.f1 - f1) <= 1e-12);
      // No candidate beats the returned one.
      std::vector<float> pooled;
      for (const auto& m : in.maps) pooled.insert(pooled.end(), m.data.begin(), m.data.end());
      for (double c : threshold_candidates(pooled)) {
        std::vector<BoolMap> pred;
        for (const auto& m : in.maps) pred.push_back(binarize(m, c, fill));
        CHECK(pixel_f1(pred, in.gt).f1 <= got.score.f1 + 1e-15);
      }
    }
  }
}

TEST_CASE("AUROC and AUPRO match brute-force oracles") {
  std::mt19937_64 rng(103);
  for (int trial = 0; trial < 200; ++trial) {
    const auto in = random_instance(rng, 16);
    for (double limit : {0.05, 0.3, 1.0}) {
      const double roc = auroc_fpr_limit(in.maps, in.gt, limit);
      const double pro = aupro_fpr_limit(in.maps, in.gt, limit);
      CHECK(std::abs(roc - superad::testing::auroc_oracle(in.maps, in.gt, limit)) <= 1e-9);
      CHECK(std::abs(pro - superad::testing::aupro_oracle(in.maps, in.gt, limit)) <= 1e-9);
      CHECK(roc >= 0.0);
      CHECK(roc <= 1.0);
      CHECK(pro >= 0.0);
      CHECK(pro <= 1.0);
    }
  }
}

TEST_CASE("AUROC and AUPRO are invariant under x -> x^3") {
  std::mt19937_64 rng(107);
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = random_instance(rng, 16);
    auto cubed = in.maps;
    for (auto& m : cubed)
      for (auto& v : m.data) v = v * v * v;
    CHECK(std::abs(auroc_fpr_limit(in.maps, in.gt) - auroc_fpr_limit(cubed, in.gt)) <= 1e-9);
    CHECK(std::abs(aupro_fpr_limit(in.maps, in.gt) - aupro_fpr_limit(cubed, in.gt)) <= 1e-9);
  }
}

TEST_CASE("AUROC / AUPRO examples") {
  const auto gt = from_rows({"##....", "##....", "......", "......"});
  FloatMap perfect(4, 6, 0.1f);
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (gt.data[i]) perfect.data[i] = 0.9f;
  CHECK(auroc_fpr_limit({perfect}, {gt}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(aupro_fpr_limit({perfect}, {gt}) == doctest::Approx(1.0).epsilon(1e-12));

  // Label-independent scores trace the diagonal; the normalized area below FPR 0.05 is 0.05 / 2.
  const FloatMap flat(4, 6, 0.3f);
  CHECK(auroc_fpr_limit({flat}, {gt}) == doctest::Approx(0.025).epsilon(1e-12));
  CHECK(auroc_fpr_limit({flat}, {gt}, 1.0) == doctest::Approx(0.5).epsilon(1e-12));

  SUBCASE("half of a 4-pixel region covered below the FPR limit") {
    BoolMap g(10, 10, 0);
    g(0, 0) = g(0, 1) = g(1, 0) = g(1, 1) = 1;
    FloatMap m(10, 10, 0.0f);
    m(0, 0) = m(0, 1) = 1.0f;
    m(1, 0) = m(1, 1) = 0.2f;
    // Ten normal pixels outrank the other half, so FPR jumps past 0.05 before it is covered.
    for (std::size_t c = 0; c < 10; ++c) m(5, c) = 0.5f;
    CHECK(aupro_fpr_limit({m}, {g}) == doctest::Approx(0.5).epsilon(1e-12));
  }

  CHECK_THROWS_AS(auroc_fpr_limit({flat}, {BoolMap(4, 6, 0)}), UndefinedMetricError);
  CHECK_THROWS_AS(auroc_fpr_limit({flat}, {BoolMap(4, 6, 1)}), UndefinedMetricError);
  CHECK_THROWS_AS(aupro_fpr_limit({flat}, {BoolMap(4, 6, 0)}), UndefinedMetricError);
  CHECK_THROWS_AS(auroc_fpr_limit({flat}, {gt}, 0.0), std::invalid_argument);
}

TEST_CASE("label_components uses 8-connectivity") {
  std::uint32_t n = 0;
  const auto labels = label_components(from_rows({"#..#", ".#..", "...#"}), n);
  CHECK(n == 3);
  CHECK(labels[0] == labels[5]);
  CHECK(labels[3] != labels[0]);
  CHECK(labels[3] != labels[11]);
}

TEST_CASE("class_f1") {
  CHECK(class_f1({0.1, 0.2, 0.8, 0.9}, {false, false, true, true}, 0.5) == 1.0);
  CHECK(class_f1({0.1, 0.2, 0.8, 0.9}, {false, false, true, true}, 0.95) == 0.0);
  // 3 TP, 1 FP, 1 FN.
  CHECK(class_f1({0.9, 0.8, 0.7, 0.6, 0.1, 0.2}, {true, true, true, false, true, false}, 0.5) == 0.75);
  CHECK_THROWS_AS(class_f1({0.1}, {true, false}, 0.5), ValidationError);

  const auto b = best_image_threshold({0.1, 0.4, 0.35, 0.8}, {false, true, false, true});
  CHECK(b.threshold == doctest::Approx(0.35));
  CHECK(b.score.f1 == 1.0);
}

TEST_CASE("EvalResult serialization") {
  EvalResult r;
  r.category = "can";
  r.split = "test_public";
  r.threshold = 0.375;
  r.threshold_frozen = true;
  r.pixel_f1 = 0.5;
  r.precision = 0.25;
  r.recall = 1.0;
  r.auroc_limit = 0.125;
  r.aupro_limit = 0.0625;
  r.class_f1 = 0.75;
  r.image_threshold = 0.5;
  r.counts = {1, 3, 0, 12};
  r.num_images = 4;
  r.num_anomalous = 2;
  const auto j = to_json(r);
  CHECK(j.at("auroc_0.05") == 0.125);
  CHECK(j.at("counts").at("fp") == 3);
  const auto back = eval_result_from_json(j);
  CHECK(to_json(back) == j);
  CHECK_THROWS_AS(eval_result_from_json(nlohmann::json::object()), FormatError);

  CHECK(csv_row(r) == "can,test_public,0.375,0.500000,0.250000,1.000000,0.125000,0.062500,0.750000,0.5,1,3,0,12,4,2");
  const auto header = csv_header();
  CHECK(std::count(header.begin(), header.end(), ',') == 15);
}
