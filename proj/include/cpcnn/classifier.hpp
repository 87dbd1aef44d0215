// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cpcnn/classes.hpp"
#include "cpcnn/image.hpp"
#include "cpcnn/layers.hpp"
#include "cpcnn/params.hpp"

namespace cpcnn {

/// Density-level classifier: conv-ReLU-maxpool blocks, then fully-connected
/// layers (ReLU + dropout between them) ending in 5 logits.
/// Layers are numbered in forward order: conv blocks first, then FC layers.
struct ClassifierArch {
  int input_size = 64;
  int kernel = 3;
  std::vector<int> conv_channels;
  /// Hidden FC widths; the 5-way output layer is appended.
  std::vector<int> hidden;
  /// Applied after each hidden FC layer.
  float dropout = 0.0f;
  int frozen_prefix = 0;

  int layer_count() const { return static_cast<int>(conv_channels.size() + hidden.size() + 1); }
  bool operator==(const ClassifierArch&) const = default;
};

/// Global estimator: 4 conv blocks {8,16,32,32}, FC 64, FC 5 on S x S input,
/// first two conv blocks frozen.
ClassifierArch gce_arch(int input_size = 64);
/// Local estimator: 2 conv blocks {8,16} and three FC layers 64-32-5 with dropout
/// after the first two, on P x P patches.
ClassifierArch lce_arch(int patch = 16);

struct ClassifierModel {
  ClassifierArch arch;
  ParameterStore<float> params;
};

using Scores = std::array<float, kNumClasses>;

/// He-normal weights, zero biases.
ClassifierModel make_classifier(const ClassifierArch& arch, std::mt19937_64& init);

/// Adds a parameter set with the layout of `arch` to `store`.
template <typename T>
void add_classifier_params(ParameterStore<T>& store, const ClassifierArch& arch, std::mt19937_64& init);

/// Traced logits [5]. `rng` drives dropout in train mode and may be null in eval mode.
template <typename T>
Var<T> classifier_logits(const ClassifierArch& arch, const BoundParams<T>& p, Var<T> x, Mode mode,
                         std::mt19937_64* rng);

/// Sigmoid scores of a [1,S,S] input; throws on any other size.
Scores classifier_scores(const ClassifierModel& model, const Image& input);
/// Resizes to the model input size first.
Scores classify_image(const ClassifierModel& model, const Image& image);
int argmax(const Scores& s);

struct LabeledInput {
  Image input;
  int label = 0;
};

struct LabeledSet {
  std::size_t size = 0;
  std::function<LabeledInput(std::size_t)> get;
};

struct TrainOptions {
  int epochs = 10;
  /// Samples drawn per epoch (without replacement within an epoch); 0 means the whole set.
  int steps_per_epoch = 0;
  float learning_rate = 1e-3f;
  float momentum = 0.9f;
  /// From this epoch on (0-based) the learning rate is scaled by decay_factor; 0 disables.
  int decay_epoch = 0;
  float decay_factor = 0.1f;
};

/// Per-sample SGD on softmax cross-entropy. Layers below arch.frozen_prefix are
/// never updated. Returns the mean loss of each epoch.
std::vector<double> train_classifier(ClassifierModel& model, const LabeledSet& data, const TrainOptions& options,
                                     std::mt19937_64& rng);

/// Fraction of items whose argmax score equals the label.
double classifier_accuracy(const ClassifierModel& model, const LabeledSet& data);

/// Indices visited in one epoch: a seeded shuffle, truncated to `steps` when nonzero.
std::vector<std::size_t> epoch_order(std::size_t size, int steps, std::mt19937_64& rng);

}  // namespace cpcnn
