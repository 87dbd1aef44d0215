// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>

#include "cpcnn/binio.hpp"
#include "cpcnn/bundle.hpp"
#include "doctest.h"

using namespace cpcnn;

namespace {

ErrorCode decode_error(std::string_view bytes) {
  try {
    (void)decode_bundle(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("decode unexpectedly succeeded");
  return ErrorCode::kIo;
}

}  // namespace

TEST_CASE("bundle byte layout") {
  ModelBundle b;
  b.records.push_back({"ab", Tensor<float>({2}, {1.0f, -2.0f})});
  const std::string bytes = encode_bundle(b);
  const std::string expected = std::string("CPNW") + std::string("\x01\x00\x00\x00", 4) +
                               std::string("\x01\x00\x00\x00", 4) + std::string("\x02\x00", 2) + "ab" +
                               std::string("\x01", 1) + std::string("\x02\x00\x00\x00", 4) +
                               std::string("\x00\x00\x80\x3f", 4) + std::string("\x00\x00\x00\xc0", 4);
  CHECK(bytes == expected);
  CHECK(decode_bundle(bytes) == b);
}

TEST_CASE("bundle round-trips bit-exactly, including odd values") {
  ModelBundle b;
  Tensor<float> odd({2, 3}, {0.0f, -0.0f, 1e-40f, 3.4e38f, -1.5f, 0.1f});
  b.records.push_back({"odd", odd});
  b.records.push_back({"scalar", Tensor<float>({1}, 7.0f)});
  b.records.push_back({"rank4", Tensor<float>({1, 2, 1, 2}, {1, 2, 3, 4})});
  const ModelBundle back = decode_bundle(encode_bundle(b));
  REQUIRE(back.records.size() == 3);
  CHECK(encode_bundle(back) == encode_bundle(b));
  CHECK(std::signbit(back.get("odd")[1]));
  CHECK(back.get("odd")[2] == 1e-40f);
  CHECK(back.find("missing") == nullptr);
  CHECK_THROWS_AS(back.get("missing"), Error);
}

TEST_CASE("malformed bundles give structured errors") {
  ModelBundle b;
  b.records.push_back({"w", Tensor<float>({3, 3}, 0.5f)});
  const std::string good = encode_bundle(b);

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(decode_error(bad_magic) == ErrorCode::kMagicMismatch);

  std::string bad_version = good;
  bad_version[4] = 2;
  CHECK(decode_error(bad_version) == ErrorCode::kVersionMismatch);

  for (std::size_t cut = 0; cut < good.size(); ++cut) CHECK(decode_error(good.substr(0, cut)) == ErrorCode::kTruncated);

  // a dimension claiming far more data than the file holds
  std::string huge = good;
  huge[4 + 4 + 4 + 2 + 1 + 1] = '\xff';
  huge[4 + 4 + 4 + 2 + 1 + 2] = '\xff';
  CHECK(decode_error(huge) == ErrorCode::kTruncated);

  CHECK(decode_error(good + "x") == ErrorCode::kInvalidArgument);
}

TEST_CASE("classifier bundle round-trip") {
  std::mt19937_64 init(1);
  ClassifierModel m = make_classifier(lce_arch(16), init);
  ClassBoundaries bounds{{0.5, 2.25, 4.0, 9.75}};
  const ClassifierBundle back = classifier_from_bundle(decode_bundle(encode_bundle(to_bundle(m, bounds))));
  CHECK(back.model.arch == m.arch);
  CHECK(back.boundaries.thresholds == bounds.thresholds);
  REQUIRE(back.model.params.size() == m.params.size());
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    CHECK(back.model.params.entries()[i].name == m.params.entries()[i].name);
    CHECK(back.model.params.entries()[i].value == m.params.entries()[i].value);
  }
  CHECK_FALSE(back.model.params.any_trainable());
  CHECK(encode_bundle(to_bundle(back.model, back.boundaries)) == encode_bundle(to_bundle(m, bounds)));

  ClassifierModel g = make_classifier(gce_arch(64), init);
  CHECK(classifier_from_bundle(to_bundle(g, bounds)).model.arch == g.arch);
}

TEST_CASE("generator and discriminator bundle round-trip") {
  std::mt19937_64 init(2);
  for (const AblationConfig& c : kAblationLadder) {
    GeneratorArch arch;
    arch.ablation = c;
    arch.density_scale = 12.5f;
    arch.infer_tile = 32;
    GeneratorModel g = make_generator(arch, init);
    DiscriminatorModel d = make_discriminator(init, DiscriminatorArch{{4, 8, 8, 16, 16}});
    const ModelBundle b = decode_bundle(encode_bundle(to_bundle(g, c.use_adversarial ? &d : nullptr)));
    const GeneratorModel g2 = generator_from_bundle(b);
    CHECK(g2.arch == g.arch);
    for (std::size_t i = 0; i < g.params.size(); ++i) CHECK(g2.params.entries()[i].value == g.params.entries()[i].value);
    CHECK(has_discriminator(b) == c.use_adversarial);
    if (c.use_adversarial) {
      const DiscriminatorModel d2 = discriminator_from_bundle(b);
      CHECK(d2.arch == d.arch);
      for (std::size_t i = 0; i < d.params.size(); ++i) CHECK(d2.params.entries()[i].value == d.params.entries()[i].value);
    } else {
      CHECK_THROWS_AS(discriminator_from_bundle(b), Error);
    }
  }
}

TEST_CASE("a bundle whose parameters do not fit its architecture is rejected") {
  std::mt19937_64 init(3);
  GeneratorModel g = make_generator(GeneratorArch{}, init);
  ModelBundle b = to_bundle(g, nullptr);
  b.records[1].value = Tensor<float>({1});
  CHECK_THROWS_AS(generator_from_bundle(b), Error);
  b.records.erase(b.records.begin() + 1);
  CHECK_THROWS_AS(generator_from_bundle(b), Error);
  CHECK_THROWS_AS(classifier_from_bundle(b), Error);
}

TEST_CASE("bundle files") {
  const auto path = std::filesystem::temp_directory_path() / "cpcnn_test_bundle.cpnw";
  ModelBundle b;
  b.records.push_back({"x", Tensor<float>({2}, {3.0f, 4.0f})});
  save_bundle(path.string(), b);
  CHECK(load_bundle(path.string()) == b);
  std::filesystem::remove(path);
  try {
    (void)load_bundle(path.string());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
}
