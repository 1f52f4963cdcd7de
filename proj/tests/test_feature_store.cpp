#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <fstream>
#include <random>

#include "superad/errors.hpp"
#include "superad/feature_store.hpp"
#include "superad/io.hpp"
#include "support/synthetic.hpp"

using namespace superad;
using superad::testing::fresh_temp_dir;
using superad::testing::random_features;

TEST_CASE("preprocess_dims examples") {
  CHECK(preprocess_dims({1000, 1000}, 672, 14) == Size2{672, 672});
  CHECK(preprocess_dims({2000, 1000}, 672, 14) == Size2{1344, 672});
  CHECK(preprocess_dims({1000, 2000}, 448, 14) == Size2{448, 896});
}

TEST_CASE("preprocess_dims rounds the long side to the nearest patch multiple, ties up") {
  // 672 * 1010 / 1000 = 678.72 -> 678.72 / 14 = 48.48 -> 48 patches
  CHECK(preprocess_dims({1000, 1010}, 672, 14) == Size2{672, 672});
  // 14 * 1.5 = 21 exactly halfway between 14 and 28 -> rounds up
  CHECK(preprocess_dims({14, 21}, 14, 14) == Size2{14, 28});
  CHECK(preprocess_dims({21, 14}, 14, 14) == Size2{28, 14});
}

TEST_CASE("preprocess_dims rejects bad input") {
  CHECK_THROWS_AS(preprocess_dims({0, 10}, 672, 14), std::invalid_argument);
  CHECK_THROWS_AS(preprocess_dims({10, 0}, 672, 14), std::invalid_argument);
  CHECK_THROWS_AS(preprocess_dims({10, 10}, 670, 14), std::invalid_argument);
}

TEST_CASE("preprocess_dims is idempotent and emits patch multiples") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    const Size2 in{static_cast<std::uint32_t>(1 + rng() % 5000), static_cast<std::uint32_t>(1 + rng() % 5000)};
    const int short_side = 14 * static_cast<int>(1 + rng() % 64);
    const auto out = preprocess_dims(in, short_side, 14);
    REQUIRE(out.height % 14 == 0);
    REQUIRE(out.width % 14 == 0);
    REQUIRE(std::min(out.height, out.width) == static_cast<std::uint32_t>(short_side));
    REQUIRE(preprocess_dims(out, short_side, 14) == out);
  }
}

TEST_CASE("feature file round trip is bit exact and deterministic") {
  std::mt19937_64 rng(3);
  const auto dir = fresh_temp_dir("feature_roundtrip");
  for (int trial = 0; trial < 20; ++trial) {
    auto f = random_features(rng, 1 + rng() % 6, 1 + rng() % 6, 1 + rng() % 9, {6, 12, 18, 24},
                             "image_" + std::to_string(trial) + "_ü");
    // Include values that only survive a bit-level copy.
    f.layers[0].values[0] = -0.0f;
    f.cls[0] = std::numeric_limits<float>::denorm_min();
    const auto a = dir / "a.sadf";
    const auto b = dir / "b.sadf";
    write_feature_file(f, a);
    write_feature_file(f, b);
    CHECK(io::read_file(a) == io::read_file(b));
    const auto back = read_feature_file(a);
    CHECK(back == f);
    CHECK(std::signbit(back.layers[0].values[0]));
  }
}

TEST_CASE("read errors: magic, truncation, geometry") {
  std::mt19937_64 rng(5);
  const auto f = random_features(rng, 3, 4, 5);
  const auto bytes = encode_features(f);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_features(bad_magic), FormatError);

  auto bad_version = bytes;
  bad_version[4] = 2;
  CHECK_THROWS_AS(decode_features(bad_version), FormatError);

  // Cut in the middle of the second layer.
  const std::size_t layer_bytes = 3 * 4 * 5 * 4 + 10;
  std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - static_cast<long>(layer_bytes * 2 + 17));
  CHECK_THROWS_AS(decode_features(truncated), CorruptionError);

  const auto dir = fresh_temp_dir("feature_errors");
  {
    std::ofstream out(dir / "trunc.sadf", std::ios::binary);
    out.write(reinterpret_cast<const char*>(truncated.data()), static_cast<std::streamsize>(truncated.size()));
  }
  try {
    read_feature_file(dir / "trunc.sadf");
    FAIL("expected CorruptionError");
  } catch (const CorruptionError& e) {
    CHECK(std::string(e.what()).find("trunc.sadf") != std::string::npos);
  }

  auto mismatch = f;
  mismatch.resized_size.height += 14;
  CHECK_THROWS_AS(encode_features(mismatch), ValidationError);
}

TEST_CASE("write rejects an invalid bundle and creates no file") {
  std::mt19937_64 rng(9);
  auto f = random_features(rng, 2, 2, 3);
  f.layers[1].grid_w = 3;
  const auto dir = fresh_temp_dir("feature_invalid");
  CHECK_THROWS_AS(write_feature_file(f, dir / "x.sadf"), ValidationError);
  CHECK_FALSE(std::filesystem::exists(dir / "x.sadf"));
  CHECK(std::filesystem::is_empty(dir));
}

namespace {

// Byte offsets of header fields for a bundle with the given id length.
struct Offsets {
  std::size_t patch_size = 6, id_len = 8, orig_h, orig_w, res_h, res_w, dim, cls_len, cls, n_layers, layer0;
  explicit Offsets(std::size_t id, std::size_t d) {
    orig_h = 12 + id;
    orig_w = orig_h + 4;
    res_h = orig_w + 4;
    res_w = res_h + 4;
    dim = res_w + 4;
    cls_len = dim + 4;
    cls = cls_len + 4;
    n_layers = cls + 4 * d;
    layer0 = n_layers + 1;
  }
};

template <typename T>
void poke(std::vector<std::uint8_t>& b, std::size_t at, T v) {
  std::memcpy(b.data() + at, &v, sizeof(T));
}

}  // namespace

TEST_CASE("validation rejects single-field corruptions") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 25; ++trial) {
    const auto gh = static_cast<std::uint32_t>(2 + rng() % 4);
    const auto gw = static_cast<std::uint32_t>(2 + rng() % 4);
    const auto d = static_cast<std::uint32_t>(2 + rng() % 6);
    const auto f = random_features(rng, gh, gw, d, {6, 12, 18, 24}, "id" + std::to_string(trial));
    const auto good = encode_features(f);
    REQUIRE_NOTHROW(decode_features(good));
    const Offsets o(f.image_id.size(), d);
    const std::size_t layer_stride = 10 + std::size_t{gh} * gw * d * 4;

    std::vector<std::function<void(std::vector<std::uint8_t>&)>> mutations{
        [&](auto& b) { b[1] ^= 0x20; },
        [&](auto& b) { poke<std::uint16_t>(b, 4, 0); },
        [&](auto& b) { poke<std::uint16_t>(b, o.patch_size, 0); },
        [&](auto& b) { poke<std::uint16_t>(b, o.patch_size, 16); },
        [&](auto& b) { poke<std::uint32_t>(b, o.id_len, static_cast<std::uint32_t>(f.image_id.size() + 1 + rng() % 50)); },
        [&](auto& b) { poke<std::uint32_t>(b, o.id_len, 0xFFFFFFF0u); },
        [&](auto& b) { poke<std::uint32_t>(b, o.orig_h, 0); },
        [&](auto& b) { poke<std::uint32_t>(b, o.orig_w, 0); },
        [&](auto& b) { poke<std::uint32_t>(b, o.res_h, gh * 14 + 14 * (1 + rng() % 3)); },
        [&](auto& b) { poke<std::uint32_t>(b, o.res_w, gw * 14 + 7); },
        [&](auto& b) { poke<std::uint32_t>(b, o.res_h, 0); },
        [&](auto& b) { poke<std::uint32_t>(b, o.dim, d + 1); },
        [&](auto& b) { poke<std::uint32_t>(b, o.cls_len, d - 1); },
        [&](auto& b) { poke<float>(b, o.cls + 4 * (rng() % d), std::numeric_limits<float>::quiet_NaN()); },
        [&](auto& b) { b[o.n_layers] = 5; },
        [&](auto& b) { b[o.n_layers] = 3; },
        [&](auto& b) { b[o.n_layers] = 0; },
        [&](auto& b) { poke<std::uint16_t>(b, o.layer0 + layer_stride, 6); },
        [&](auto& b) { poke<std::uint16_t>(b, o.layer0, 0); },
        [&](auto& b) { poke<std::uint32_t>(b, o.layer0 + 2, gh + 1); },
        [&](auto& b) { poke<std::uint32_t>(b, o.layer0 + layer_stride + 6, gw - 1); },
        [&](auto& b) { poke<float>(b, o.layer0 + 10 + 4 * (rng() % (gh * gw * d)), std::numeric_limits<float>::infinity()); },
        [&](auto& b) { b.pop_back(); },
        [&](auto& b) { b.push_back(0); },
    };
    for (std::size_t m = 0; m < mutations.size(); ++m) {
      auto bad = good;
      mutations[m](bad);
      CAPTURE(m);
      CHECK_THROWS_AS(decode_features(bad), DataError);
    }
  }
}

TEST_CASE("prefix read returns the CLS vector only") {
  std::mt19937_64 rng(4);
  const auto f = random_features(rng, 3, 3, 7, {6, 12}, "pre");
  const auto dir = fresh_temp_dir("feature_prefix");
  write_feature_file(f, dir / "p.sadf");
  const auto p = read_feature_prefix(dir / "p.sadf");
  CHECK(p.image_id == "pre");
  CHECK(p.cls == f.cls);
  CHECK(p.layers.empty());
  CHECK(p.resized_size == f.resized_size);
}
