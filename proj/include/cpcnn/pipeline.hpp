// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "cpcnn/context.hpp"
#include "cpcnn/synth.hpp"

namespace cpcnn {

struct AblationConfig {
  bool use_gce = true;
  bool use_lce = true;
  bool use_adversarial = true;

  /// F-CNN is present whenever any context estimator is; DME alone uses a 1x1 head.
  bool has_fcnn() const { return use_gce || use_lce; }
  int context_planes() const { return kNumClasses * ((use_gce ? 1 : 0) + (use_lce ? 1 : 0)); }
  void validate() const;
  bool operator==(const AblationConfig&) const = default;
};

/// DME; DME+GCE+F-CNN; DME+GCE+LCE+F-CNN; the same with the adversarial loss.
inline constexpr std::array<AblationConfig, 4> kAblationLadder{{
    {false, false, false},
    {true, false, false},
    {true, true, false},
    {true, true, true},
}};

/// Short directory-safe name: dme, dme_gce, dme_gce_lce, full.
std::string ablation_tag(const AblationConfig& config);
AblationConfig ablation_from_tag(const std::string& tag);

struct GeneratorArch {
  /// One DME column per entry: conv(k)-ReLU-pool-conv(k)-ReLU-pool-conv(k)-ReLU, width w.
  std::vector<int> column_kernels{9, 7, 5};
  std::vector<int> column_widths{16, 12, 8};
  /// Kernels of the three stride-1 F-CNN convolutions CR(64,k0), CR(32,k1), CR(16,k2).
  std::array<int, 3> fcnn_kernels{9, 7, 5};
  /// Training targets are multiplied by this and inferred maps divided by it.
  float density_scale = 1.0f;
  /// 0 runs inference on the whole image; otherwise on tile x tile crops (edge tiles
  /// overlap and are averaged), each with the context of a training crop.
  int infer_tile = 0;
  AblationConfig ablation;

  int dme_channels() const;
  int fcnn_input_channels() const { return dme_channels() + ablation.context_planes(); }
  bool operator==(const GeneratorArch&) const = default;
};

struct GeneratorModel {
  GeneratorArch arch;
  ParameterStore<float> params;
};

/// CP(w0)-CP(w1)-M-CP(w2)-M-CP(w3)-CP(w4)-M-C(1)-Sigmoid with 3x3 kernels,
/// fully convolutional over a 1-channel density map.
struct DiscriminatorArch {
  std::array<int, 5> widths{64, 128, 256, 256, 256};
  bool operator==(const DiscriminatorArch&) const = default;
};

struct DiscriminatorModel {
  DiscriminatorArch arch;
  ParameterStore<float> params;
};

template <typename T>
void add_generator_params(ParameterStore<T>& store, const GeneratorArch& arch, std::mt19937_64& init);
GeneratorModel make_generator(const GeneratorArch& arch, std::mt19937_64& init);

template <typename T>
void add_discriminator_params(ParameterStore<T>& store, const DiscriminatorArch& arch, std::mt19937_64& init);
DiscriminatorModel make_discriminator(std::mt19937_64& init, const DiscriminatorArch& arch = {});

/// DME features [C, H/4, W/4]; H and W must be divisible by 4.
template <typename T>
Var<T> dme_forward(const GeneratorArch& arch, const BoundParams<T>& p, Var<T> image);

/// Full-resolution density [1,H,W] when F-CNN is present, else [1,H/4,W/4].
/// `context` holds the enabled maps in order (global, then local), each [5,H/4,W/4].
template <typename T>
Var<T> generator_forward(const GeneratorArch& arch, const BoundParams<T>& p, Var<T> image,
                         const std::vector<Var<T>>& context);

/// Per-pixel probability map of the discriminator.
template <typename T>
Var<T> discriminator_forward(const DiscriminatorArch& arch, const BoundParams<T>& p, Var<T> density);

/// Mean over pixels of |pred - gt| (or of (pred - gt)^2 when `squared`).
template <typename T>
Var<T> euclidean_loss(Var<T> pred, Var<T> gt, bool squared = false);

inline constexpr double kProbabilityClamp = 1e-7;

/// -log(mean of the discriminator map).
template <typename T>
Var<T> adversarial_loss(Var<T> discriminator_map);

/// L_E + lambda_a * L_A.
template <typename T>
Var<T> total_loss(Var<T> euclidean, Var<T> adversarial, T lambda_a);

/// -log D(real) - log(1 - D(fake)) with D the map mean.
template <typename T>
Var<T> discriminator_loss(Var<T> real_map, Var<T> fake_map);

struct DiscriminatorStep {
  double loss = 0.0;
  double d_real = 0.0;
  double d_fake = 0.0;
};

/// One SGD step on the discriminator. `fake` is a plain tensor, so nothing flows
/// back into the generator.
DiscriminatorStep discriminator_step(const DensityMap& real, const DensityMap& fake, DiscriminatorModel& model,
                                     OptimizerState<float>& state);

/// Evaluation-mode generator output for an image and its context maps.
DensityMap generate(const GeneratorModel& model, const Image& image, const ContextMap* global_ctx,
                    const ContextMap* local_ctx);

struct E2EOptions {
  int epochs = 10;
  int steps_per_epoch = 0;
  float learning_rate = 1e-4f;
  float momentum = 0.9f;
  float discriminator_learning_rate = 1e-4f;
  float lambda_a = 1e-3f;
  bool squared_loss = false;
  /// Step decay of both learning rates, as in TrainOptions.
  int decay_epoch = 0;
  float decay_factor = 0.1f;
};

struct E2EHistory {
  /// Mean L_T of each epoch (equals L_E without the adversarial term).
  std::vector<double> total;
  std::vector<double> euclidean;
  int discriminator_updates = 0;
};

/// Ground truth the generator output is compared with: the map itself, or its
/// 4x4 sums for the DME-only head.
DensityMap training_target(const GeneratorArch& arch, const DensityMap& density);

/// End-to-end DME + F-CNN training on D_dme with frozen context estimators.
/// Throws kContractViolation when a used estimator still has trainable parameters.
E2EHistory train_end_to_end(const PatchDataset& data, const ClassifierModel* gce, const ClassifierModel* lce,
                            GeneratorModel& generator, DiscriminatorModel* discriminator, const E2EOptions& options,
                            std::mt19937_64& rng);

struct Inference {
  /// Full-resolution map, clamped at 0 and divided by the density scale; the DME-only
  /// head predicts per-pixel density at quarter resolution and is replicated over 4x4 blocks.
  DensityMap density;
  double count = 0.0;
};

/// Block-wise global context, sliding-window local context, then the generator.
Inference infer(const Image& image, const ClassifierModel* gce, const ClassifierModel* lce,
                const GeneratorModel& generator);

}  // namespace cpcnn
