// SPDX-License-Identifier: Apache-2.0
// Run configuration: UTF-8 `key = value` lines with `#` comments. Command-line
// overrides go through the same setter, so one format serves every command.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cpcnn/classifier.hpp"
#include "cpcnn/pipeline.hpp"
#include "cpcnn/synth.hpp"

namespace cpcnn {

struct RunConfig {
  std::uint64_t seed = 1;
  /// Corpus size for `synth`; the first train_fraction of the ids train, the rest test.
  int scenes = 200;
  double train_fraction = 0.8;
  SceneSpec scene;
  double sigma = 2.0;
  int classes = kNumClasses;

  int gce_input = 64;
  int lce_patch = 16;
  TrainOptions gce{5, 2000, 1e-3f, 0.9f};
  TrainOptions lce{5, 2000, 1e-3f, 0.9f};
  E2EOptions full;
  std::array<int, 3> fcnn_kernels{9, 7, 5};
  float density_scale = 1.0f;
  int infer_tile = 0;
  DiscriminatorArch discriminator;
  /// Ablation row trained by `train --stage full`.
  AblationConfig ablation = kAblationLadder[3];

  GeneratorArch generator_arch() const;
  int train_count() const;
};

/// Throws kInvalidArgument naming the key for unknown keys, malformed values and
/// a class count other than 5.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);
/// `source` prefixes error messages (e.g. a file name) together with the line number.
RunConfig parse_config(std::string_view text, const std::string& source = "config", RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});
/// Every key with its current value, in a form parse_config reads back.
std::string format_config(const RunConfig& config);

}  // namespace cpcnn
