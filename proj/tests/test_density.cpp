// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <random>

#include "cpcnn/binio.hpp"
#include "cpcnn/density.hpp"
#include "doctest.h"

using namespace cpcnn;

namespace {

DotScene random_scene(std::mt19937_64& rng, int w, int h, int n) {
  DotScene s{w, h, {}};
  std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h);
  for (int i = 0; i < n; ++i) {
    Dot d{ux(rng), uy(rng)};
    if (d.x >= w) d.x = std::nextafter(double(w), 0.0);
    if (d.y >= h) d.y = std::nextafter(double(h), 0.0);
    s.dots.push_back(d);
  }
  return s;
}

std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() / "cpcnn_test_density";
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("render_density basics") {
  DensityMap empty = render_density(DotScene{16, 12, {}}, 2.0);
  CHECK(empty.shape() == Shape{1, 12, 16});
  CHECK(count_of(empty) == 0.0);

  for (double sigma : {0.5, 1.0, 2.0, 4.0, 7.5}) {
    CHECK(std::abs(count_of(render_density(DotScene{20, 20, {{3.3, 17.9}}}, sigma)) - 1.0) < 1e-6);
  }
  DotScene three{64, 64, {{10, 10}, {32.5, 40.25}, {63.9, 0.1}}};
  CHECK(std::abs(count_of(render_density(three, 2.0)) - 3.0) < 1e-6);
  for (float v : render_density(three, 2.0).data()) CHECK(v >= 0.0f);
}

TEST_CASE("render_density rejects dots outside and bad sigma") {
  CHECK_THROWS_AS(render_density(DotScene{8, 8, {{8.0, 1.0}}}, 2.0), Error);
  CHECK_THROWS_AS(render_density(DotScene{8, 8, {{-0.1, 1.0}}}, 2.0), Error);
  CHECK_THROWS_AS(render_density(DotScene{8, 8, {}}, 0.0), Error);
}

TEST_CASE("render_density: tiny sigma falls back to the containing pixel") {
  DensityMap m = render_density(DotScene{4, 4, {{2.0, 1.0}}}, 0.05);
  CHECK(m.at(0, 1, 2) == 1.0f);
  CHECK(count_of(m) == 1.0);
}

TEST_CASE("render_density kernel shape matches a direct Gaussian evaluation") {
  // Dot far from the borders: the kernel is the unnormalised Gaussian divided by its disc sum.
  const double sigma = 2.0, cx = 20.3, cy = 18.7;
  DensityMap m = render_density(DotScene{40, 40, {{cx, cy}}}, sigma);
  double z = 0.0;
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) {
      const double r2 = (x + 0.5 - cx) * (x + 0.5 - cx) + (y + 0.5 - cy) * (y + 0.5 - cy);
      if (r2 <= 64.0) z += std::exp(-r2 / 8.0);
    }
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) {
      const double r2 = (x + 0.5 - cx) * (x + 0.5 - cx) + (y + 0.5 - cy) * (y + 0.5 - cy);
      const double expect = r2 <= 64.0 ? std::exp(-r2 / 8.0) / z : 0.0;
      CHECK(m.at(0, y, x) == doctest::Approx(expect).epsilon(1e-6).scale(1e-6));
    }
}

TEST_CASE("mass conservation for sigma 1, 2, 4 including corners") {
  std::mt19937_64 rng(3);
  for (double sigma : {1.0, 2.0, 4.0}) {
    for (int trial = 0; trial < 20; ++trial) {
      DotScene s = random_scene(rng, 48, 32, trial * 3);
      s.dots.push_back({0.0, 0.0});
      s.dots.push_back({47.999, 31.999});
      CHECK(std::abs(count_of(render_density(s, sigma)) - double(s.dots.size())) < 1e-4);
    }
  }
  std::mt19937_64 rng7(7);
  CHECK(std::abs(count_of(render_density(random_scene(rng7, 30, 30, 7), 2.0)) - 7.0) < 1e-4);
}

TEST_CASE("crop_density") {
  std::mt19937_64 rng(4);
  DotScene s = random_scene(rng, 64, 64, 40);
  DensityMap m = render_density(s, 2.0);
  CHECK(crop_density(m, {0, 0, 64, 64}) == m);
  const double total = count_of(m);
  double quarters = 0.0;
  for (Rect r : {Rect{0, 0, 32, 32}, Rect{32, 0, 32, 32}, Rect{0, 32, 32, 32}, Rect{32, 32, 32, 32}}) {
    const double c = count_of(crop_density(m, r));
    CHECK(c >= 0.0);
    CHECK(c <= total + 1e-6);
    quarters += c;
  }
  CHECK(std::abs(quarters - total) < 1e-6);

  // any tiling, here 3 x 5 uneven strips
  double tiles = 0.0;
  const int xs[] = {0, 10, 37, 64}, ys[] = {0, 7, 20, 21, 50, 64};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) tiles += count_of(crop_density(m, {xs[i], ys[j], xs[i + 1] - xs[i], ys[j + 1] - ys[j]}));
  CHECK(std::abs(tiles - total) < 1e-6);

  // every dot is at least 4 sigma from this rectangle
  DensityMap two = render_density(DotScene{64, 64, {{5, 5}, {60, 60}}}, 2.0);
  CHECK(count_of(crop_density(two, {20, 20, 24, 24})) < 1e-6);

  CHECK_THROWS_AS(crop_density(m, {40, 40, 30, 10}), Error);
  CHECK_THROWS_AS(crop_density(m, {-1, 0, 3, 3}), Error);
}

TEST_CASE("scene text format round-trips") {
  std::mt19937_64 rng(5);
  DotScene s = random_scene(rng, 64, 48, 25);
  CHECK(parse_scene(format_scene(s)) == s);
  CHECK(parse_scene("3 2\n0 0\n2.5 1.5\n\n") == DotScene{3, 2, {{0, 0}, {2.5, 1.5}}});
  CHECK_THROWS_AS(parse_scene("3 2\n3 0\n"), Error);
  CHECK_THROWS_AS(parse_scene("3\n"), Error);
  CHECK_THROWS_AS(parse_scene("3 2\nfoo bar\n"), Error);
  const auto path = (temp_dir() / "s.txt").string();
  save_scene(path, s);
  CHECK(load_scene(path) == s);
}

TEST_CASE("density file format") {
  std::mt19937_64 rng(6);
  DensityMap m = render_density(random_scene(rng, 20, 12, 9), 1.5);
  const std::string bytes = encode_density(m);
  CHECK(bytes.size() == 12 + 20 * 12 * 4);
  CHECK(bytes.substr(0, 4) == "CPDM");
  CHECK(bytes[4] == 20);  // little-endian width
  CHECK(bytes[8] == 12);
  CHECK(decode_density(bytes) == m);

  const auto path = (temp_dir() / "m.cpdm").string();
  save_density(path, m);
  CHECK(load_density(path) == m);

  std::string bad = bytes;
  bad[0] = 'X';
  try {
    (void)decode_density(bad);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMagicMismatch);
  }
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{9}, bytes.size() - 1}) {
    try {
      (void)decode_density(bytes.substr(0, cut));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kTruncated);
    }
  }
  CHECK_THROWS_AS(load_density((temp_dir() / "missing.cpdm").string()), Error);
}
