// SPDX-License-Identifier: Apache-2.0
// Model bundle files: magic `CPNW`, u32 version, u32 record count, then per
// record a u16 name length, the UTF-8 name, u8 rank, u32 dims and f32 values.
// All integers and floats little-endian.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cpcnn/classes.hpp"
#include "cpcnn/classifier.hpp"
#include "cpcnn/pipeline.hpp"

namespace cpcnn {

inline constexpr std::uint32_t kBundleVersion = 1;

struct BundleRecord {
  std::string name;
  Tensor<float> value;
  bool operator==(const BundleRecord&) const = default;
};

struct ModelBundle {
  std::vector<BundleRecord> records;

  const Tensor<float>* find(std::string_view name) const;
  /// Throws kInvalidArgument naming the missing record.
  const Tensor<float>& get(std::string_view name) const;
  bool operator==(const ModelBundle&) const = default;
};

std::string encode_bundle(const ModelBundle& bundle);
/// kMagicMismatch, kVersionMismatch or kTruncated on malformed input.
ModelBundle decode_bundle(std::string_view bytes);
void save_bundle(const std::string& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::string& path);

// Architecture and class boundaries travel as `meta.*` records of small
// integers (or float thresholds) next to the parameters.

struct ClassifierBundle {
  ClassifierModel model;
  ClassBoundaries boundaries;
};

ModelBundle to_bundle(const ClassifierModel& model, const ClassBoundaries& boundaries);
/// Loaded parameters are all marked frozen.
ClassifierBundle classifier_from_bundle(const ModelBundle& bundle);

/// Generator parameters plus, when given, the discriminator's.
ModelBundle to_bundle(const GeneratorModel& generator, const DiscriminatorModel* discriminator);
GeneratorModel generator_from_bundle(const ModelBundle& bundle);
/// Throws when the bundle holds no discriminator.
DiscriminatorModel discriminator_from_bundle(const ModelBundle& bundle);
bool has_discriminator(const ModelBundle& bundle);

}  // namespace cpcnn
