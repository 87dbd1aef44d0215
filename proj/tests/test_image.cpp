// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <random>

#include "cpcnn/binio.hpp"
#include "cpcnn/image.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cpcnn;

TEST_CASE("crop and flip") {
  Image img({1, 2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(crop(img, {1, 0, 2, 2}) == Image({1, 2, 2}, {2, 3, 5, 6}));
  CHECK(flip_horizontal(img) == Image({1, 2, 3}, {3, 2, 1, 6, 5, 4}));
  CHECK(flip_horizontal(flip_horizontal(img)) == img);
  CHECK_THROWS_AS(crop(img, {2, 0, 2, 1}), Error);
}

TEST_CASE("resize_bilinear") {
  Image c({2, 5, 7}, 0.3f);
  for (float v : resize_bilinear(c, 16, 9).data()) CHECK(v == doctest::Approx(0.3f));
  std::mt19937_64 rng(1);
  Image r = testutil::random_tensor<float>({1, 6, 6}, rng, 0, 1);
  CHECK(resize_bilinear(r, 6, 6) == r);
  // 2x2 -> 4x4 with half-pixel centres: row 0 interpolates 1..2 as 1, 1.25, 1.75, 2
  Image up = resize_bilinear(Image({1, 2, 2}, {1, 2, 3, 4}), 4, 4);
  CHECK(up.at(0, 0, 0) == 1.0f);
  CHECK(up.at(0, 0, 1) == doctest::Approx(1.25f));
  CHECK(up.at(0, 0, 2) == doctest::Approx(1.75f));
  CHECK(up.at(0, 3, 3) == 4.0f);
  // halving averages 2x2 blocks exactly
  Image down = resize_bilinear(Image({1, 2, 4}, {0, 2, 4, 8, 2, 4, 6, 10}), 1, 2);
  CHECK(down == Image({1, 1, 2}, {2, 7}));
}

TEST_CASE("box_downsample, sum_pool and mass_upsample") {
  Image img({1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(box_downsample(img, 2) == Image({1, 1, 2}, {3.5f, 5.5f}));
  CHECK(sum_pool(img, 2) == Image({1, 1, 2}, {14, 22}));
  CHECK_THROWS_AS(box_downsample(img, 3), Error);
  Image up = mass_upsample(Image({1, 1, 2}, {16, 32}), 4);
  CHECK(up.shape() == Shape{1, 4, 8});
  CHECK(tensor_sum(up) == 48.0);
  CHECK(up.at(0, 3, 5) == 2.0f);
  CHECK(sum_pool(up, 4) == Image({1, 1, 2}, {16, 32}));
}

TEST_CASE("PGM round-trip and scaling") {
  const auto dir = std::filesystem::temp_directory_path() / "cpcnn_test_image";
  std::filesystem::create_directories(dir);
  Image img({1, 3, 4});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(i * 20) / 255.0f;
  write_pgm((dir / "a.pgm").string(), img);
  Image back = read_pgm((dir / "a.pgm").string());
  CHECK(back.shape() == img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back[i] == doctest::Approx(img[i]).epsilon(1e-6));

  write_pgm_scaled((dir / "b.pgm").string(), Image({1, 2, 2}, {0.0f, 0.01f, 0.02f, 0.04f}));
  const std::string raw = read_file((dir / "b.pgm").string());
  CHECK(static_cast<unsigned char>(raw.back()) == 255);

  write_file((dir / "c.pgm").string(), "P5\n# comment\n2 1\n255\n\x10\x20");
  CHECK(read_pgm((dir / "c.pgm").string()) == Image({1, 1, 2}, {16.0f / 255, 32.0f / 255}));
  write_file((dir / "d.pgm").string(), "P5\n4 4\n255\nab");
  CHECK_THROWS_AS(read_pgm((dir / "d.pgm").string()), Error);
  write_file((dir / "e.pgm").string(), "P2\n1 1\n255\n1");
  CHECK_THROWS_AS(read_pgm((dir / "e.pgm").string()), Error);
}
