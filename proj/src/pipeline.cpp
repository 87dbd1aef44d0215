// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "cpcnn/ops.hpp"

namespace cpcnn {

void AblationConfig::validate() const {
  if (use_lce && !use_gce) fail(ErrorCode::kInvalidArgument, "ablation: local context requires global context");
  if (use_adversarial && !has_fcnn()) {
    fail(ErrorCode::kInvalidArgument, "ablation: the adversarial loss needs the full-resolution F-CNN output");
  }
}

std::string ablation_tag(const AblationConfig& c) {
  if (c.use_adversarial) return c.use_lce ? "full" : (c.use_gce ? "dme_gce_adv" : "dme_adv");
  if (c.use_lce) return "dme_gce_lce";
  return c.use_gce ? "dme_gce" : "dme";
}

AblationConfig ablation_from_tag(const std::string& tag) {
  for (const AblationConfig& c : kAblationLadder) {
    if (ablation_tag(c) == tag) return c;
  }
  fail(ErrorCode::kInvalidArgument, "unknown configuration `" + tag + "` (expected dme, dme_gce, dme_gce_lce or full)");
}

int GeneratorArch::dme_channels() const {
  int c = 0;
  for (int w : column_widths) c += w;
  return c;
}

namespace {

template <typename T>
Tensor<T> normal_init(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> n(0.0, stddev);
  for (T& v : t.data()) v = static_cast<T>(n(rng));
  return t;
}

template <typename T>
void add_conv(ParameterStore<T>& s, const std::string& name, int in, int out, int k, int layer, std::mt19937_64& rng,
              double gain = 2.0) {
  s.add(name + ".w", normal_init<T>({out, in, k, k}, std::sqrt(gain / (in * k * k)), rng), layer);
  s.add(name + ".b", Tensor<T>({out}), layer);
}

template <typename T>
void add_transposed(ParameterStore<T>& s, const std::string& name, int in, int out, int layer, std::mt19937_64& rng) {
  // each output pixel receives in * 4 taps
  s.add(name + ".w", normal_init<T>({in, out, 4, 4}, std::sqrt(2.0 / (in * 4)), rng), layer);
  s.add(name + ".b", Tensor<T>({out}), layer);
}

struct FcnnLayer {
  const char* name;
  bool transposed;
  int out;
  /// Index into GeneratorArch::fcnn_kernels, or -1 for the fixed-size layers.
  int kernel_slot;
  bool relu;
};

// CR(64,k0)-CR(32,k1)-TR(32)-CR(16,k2)-TR(16)-C(1,1)
constexpr FcnnLayer kFcnn[] = {
    {"fcnn.cr64", false, 64, 0, true}, {"fcnn.cr32", false, 32, 1, true}, {"fcnn.tr32", true, 32, -1, true},
    {"fcnn.cr16", false, 16, 2, true}, {"fcnn.tr16", true, 16, -1, true}, {"fcnn.c1", false, 1, -1, false},
};

int kernel_of(const GeneratorArch& a, const FcnnLayer& l) {
  return l.kernel_slot < 0 ? 1 : a.fcnn_kernels[static_cast<std::size_t>(l.kernel_slot)];
}

// max-pool after CP layers 1, 2 and 4
constexpr bool kDiscPoolAfter[] = {false, true, true, false, true};
constexpr double kPreluInit = 0.25;

void validate_arch(const GeneratorArch& a) {
  a.ablation.validate();
  if (a.column_kernels.empty() || a.column_kernels.size() != a.column_widths.size()) {
    fail(ErrorCode::kInvalidArgument, "GeneratorArch: need matching, non-empty column kernels and widths");
  }
  for (std::size_t i = 0; i < a.column_kernels.size(); ++i) {
    if (a.column_kernels[i] <= 0 || a.column_kernels[i] % 2 == 0 || a.column_widths[i] <= 0) {
      fail(ErrorCode::kInvalidArgument, "GeneratorArch: column kernels must be odd and widths positive");
    }
  }
  for (int k : a.fcnn_kernels) {
    if (k <= 0 || k % 2 == 0) fail(ErrorCode::kInvalidArgument, "GeneratorArch: F-CNN kernels must be odd");
  }
  if (a.infer_tile < 0 || a.infer_tile % 4 != 0) {
    fail(ErrorCode::kInvalidArgument, "GeneratorArch: infer_tile must be 0 or a positive multiple of 4");
  }
  if (!(a.density_scale > 0.0f) || !std::isfinite(a.density_scale)) {
    fail(ErrorCode::kInvalidArgument, "GeneratorArch: density_scale must be positive and finite");
  }
}

std::string column_name(std::size_t col, int conv) {
  return "dme.col" + std::to_string(col) + ".conv" + std::to_string(conv);
}

}  // namespace

template <typename T>
void add_generator_params(ParameterStore<T>& store, const GeneratorArch& arch, std::mt19937_64& init) {
  validate_arch(arch);
  int layer = 0;
  for (std::size_t col = 0; col < arch.column_kernels.size(); ++col) {
    const int k = arch.column_kernels[col], w = arch.column_widths[col];
    for (int j = 0; j < 3; ++j) add_conv(store, column_name(col, j), j == 0 ? 1 : w, w, k, layer++, init);
  }
  if (!arch.ablation.has_fcnn()) {
    add_conv(store, "head", arch.dme_channels(), 1, 1, layer, init, 1.0);
    return;
  }
  int in = arch.fcnn_input_channels();
  for (const FcnnLayer& l : kFcnn) {
    if (l.transposed) {
      add_transposed(store, l.name, in, l.out, layer++, init);
    } else {
      add_conv(store, l.name, in, l.out, kernel_of(arch, l), layer++, init, l.relu ? 2.0 : 1.0);
    }
    in = l.out;
  }
}

GeneratorModel make_generator(const GeneratorArch& arch, std::mt19937_64& init) {
  GeneratorModel m{arch, {}};
  add_generator_params(m.params, arch, init);
  return m;
}

template <typename T>
void add_discriminator_params(ParameterStore<T>& store, const DiscriminatorArch& arch, std::mt19937_64& init) {
  int in = 1, layer = 0;
  const double gain = 2.0 / (1.0 + kPreluInit * kPreluInit);
  for (int out : arch.widths) {
    if (out <= 0) fail(ErrorCode::kInvalidArgument, "DiscriminatorArch: widths must be positive");
    const std::string n = "disc.cp" + std::to_string(layer);
    add_conv(store, n, in, out, 3, layer, init, gain);
    store.add(n + ".a", Tensor<T>({out}, static_cast<T>(kPreluInit)), layer);
    in = out;
    ++layer;
  }
  add_conv(store, "disc.c1", in, 1, 3, layer, init, 1.0);
}

DiscriminatorModel make_discriminator(std::mt19937_64& init, const DiscriminatorArch& arch) {
  DiscriminatorModel m{arch, {}};
  add_discriminator_params(m.params, arch, init);
  return m;
}

template <typename T>
Var<T> dme_forward(const GeneratorArch& arch, const BoundParams<T>& p, Var<T> image) {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[0] != 1 || s[1] % 4 != 0 || s[2] % 4 != 0) {
    fail(ErrorCode::kShapeMismatch, "DME input must be [1,H,W] with H and W divisible by 4, got " + shape_str(s));
  }
  std::vector<Var<T>> columns;
  for (std::size_t col = 0; col < arch.column_kernels.size(); ++col) {
    const int k = arch.column_kernels[col], w = arch.column_widths[col];
    Var<T> x = image;
    for (int j = 0; j < 3; ++j) {
      const std::string n = column_name(col, j);
      x = relu(conv2d(x, p(n + ".w"), p(n + ".b"), ConvSpec{j == 0 ? 1 : w, w, k}));
      if (j < 2) x = maxpool2(x);
    }
    columns.push_back(x);
  }
  return concat_channels(columns);
}

template <typename T>
Var<T> generator_forward(const GeneratorArch& arch, const BoundParams<T>& p, Var<T> image,
                         const std::vector<Var<T>>& context) {
  Var<T> features = dme_forward(arch, p, image);
  const int qh = features.shape()[1], qw = features.shape()[2];
  const std::size_t expected = static_cast<std::size_t>(arch.ablation.context_planes() / kNumClasses);
  if (context.size() != expected) {
    fail(ErrorCode::kShapeMismatch, "generator: configuration " + ablation_tag(arch.ablation) + " takes " +
                                        std::to_string(expected) + " context maps, got " +
                                        std::to_string(context.size()));
  }
  if (!arch.ablation.has_fcnn()) return conv2d(features, p("head.w"), p("head.b"), ConvSpec{arch.dme_channels(), 1, 1});

  std::vector<Var<T>> parts{features};
  for (const Var<T>& c : context) {
    if (c.shape() != Shape{kNumClasses, qh, qw}) {
      fail(ErrorCode::kShapeMismatch, "generator: context map " + shape_str(c.shape()) + " does not match [5," +
                                          std::to_string(qh) + "," + std::to_string(qw) + "]");
    }
    parts.push_back(c);
  }
  Var<T> x = concat_channels(parts);
  int in = arch.fcnn_input_channels();
  if (x.shape()[0] != in) fail(ErrorCode::kContractViolation, "generator: F-CNN channel bookkeeping mismatch");
  for (const FcnnLayer& l : kFcnn) {
    const std::string n = l.name;
    x = l.transposed ? transposed_conv2d(x, p(n + ".w"), p(n + ".b"), TransposedConvSpec{in, l.out})
                     : conv2d(x, p(n + ".w"), p(n + ".b"), ConvSpec{in, l.out, kernel_of(arch, l)});
    if (l.relu) x = relu(x);
    in = l.out;
  }
  return x;
}

template <typename T>
Var<T> discriminator_forward(const DiscriminatorArch& arch, const BoundParams<T>& p, Var<T> density) {
  const Shape& s = density.shape();
  if (s.size() != 3 || s[0] != 1) fail(ErrorCode::kShapeMismatch, "discriminator expects [1,H,W], got " + shape_str(s));
  Var<T> x = density;
  int in = 1;
  for (std::size_t layer = 0; layer < arch.widths.size(); ++layer) {
    const int out = arch.widths[layer];
    const std::string n = "disc.cp" + std::to_string(layer);
    x = prelu(conv2d(x, p(n + ".w"), p(n + ".b"), ConvSpec{in, out, 3}), p(n + ".a"));
    if (kDiscPoolAfter[layer]) x = maxpool2(x);
    in = out;
  }
  return sigmoid(conv2d(x, p("disc.c1.w"), p("disc.c1.b"), ConvSpec{in, 1, 3}));
}

template <typename T>
Var<T> euclidean_loss(Var<T> pred, Var<T> gt, bool squared) {
  require_same_shape(pred.shape(), gt.shape(), "euclidean_loss");
  Var<T> d = sub(pred, gt);
  return mean(squared ? square(d) : abs(d));
}

template <typename T>
Var<T> adversarial_loss(Var<T> discriminator_map) {
  const T eps = static_cast<T>(kProbabilityClamp);
  return scale(log(clamp(mean(discriminator_map), eps, T(1) - eps)), T(-1));
}

template <typename T>
Var<T> total_loss(Var<T> euclidean, Var<T> adversarial, T lambda_a) {
  if (lambda_a < T(0)) fail(ErrorCode::kInvalidArgument, "total_loss: lambda_a must be non-negative");
  return add(euclidean, scale(adversarial, lambda_a));
}

template <typename T>
Var<T> discriminator_loss(Var<T> real_map, Var<T> fake_map) {
  const T eps = static_cast<T>(kProbabilityClamp);
  Var<T> real_term = log(clamp(mean(real_map), eps, T(1) - eps));
  Var<T> fake_term = log(clamp(add_scalar(scale(mean(fake_map), T(-1)), T(1)), eps, T(1) - eps));
  return scale(add(real_term, fake_term), T(-1));
}

DiscriminatorStep discriminator_step(const DensityMap& real, const DensityMap& fake, DiscriminatorModel& model,
                                     OptimizerState<float>& state) {
  require_same_shape(real.shape(), fake.shape(), "discriminator_step");
  Tape<float> tape;
  const BoundParams<float> p = bind(tape, model.params);
  Var<float> d_real = discriminator_forward(model.arch, p, tape.constant(real));
  Var<float> d_fake = discriminator_forward(model.arch, p, tape.constant(fake));
  Var<float> loss = discriminator_loss(d_real, d_fake);
  DiscriminatorStep r;
  r.loss = loss.value()[0];
  r.d_real = tensor_sum(d_real.value()) / static_cast<double>(d_real.value().size());
  r.d_fake = tensor_sum(d_fake.value()) / static_cast<double>(d_fake.value().size());
  tape.backward(loss);
  apply_sgd(model.params, p, tape, state);
  return r;
}

namespace {

std::vector<Var<float>> context_vars(Tape<float>& tape, const AblationConfig& a, const ContextMap* global_ctx,
                                     const ContextMap* local_ctx) {
  std::vector<Var<float>> ctx;
  if (a.use_gce) {
    if (!global_ctx) fail(ErrorCode::kInvalidArgument, "generator: configuration needs a global context map");
    ctx.push_back(tape.constant(*global_ctx));
  }
  if (a.use_lce) {
    if (!local_ctx) fail(ErrorCode::kInvalidArgument, "generator: configuration needs a local context map");
    ctx.push_back(tape.constant(*local_ctx));
  }
  return ctx;
}

void require_frozen(const ClassifierModel* m, const char* name) {
  if (!m) fail(ErrorCode::kInvalidArgument, std::string("train_end_to_end: configuration needs the ") + name);
  if (m->params.any_trainable()) {
    fail(ErrorCode::kContractViolation,
         std::string("train_end_to_end: ") + name + " must be frozen before end-to-end training");
  }
}

}  // namespace

DensityMap generate(const GeneratorModel& model, const Image& image, const ContextMap* global_ctx,
                    const ContextMap* local_ctx) {
  Tape<float> tape;
  const BoundParams<float> p = bind(tape, model.params, true);
  const auto ctx = context_vars(tape, model.arch.ablation, global_ctx, local_ctx);
  return generator_forward(model.arch, p, tape.constant(image), ctx).value();
}

DensityMap training_target(const GeneratorArch& arch, const DensityMap& density) {
  // without the F-CNN the target is the box mean, so every configuration regresses per-pixel density
  DensityMap t = arch.ablation.has_fcnn() ? density : box_downsample(density, 4);
  if (arch.density_scale != 1.0f) {
    for (float& v : t.data()) v *= arch.density_scale;
  }
  return t;
}

E2EHistory train_end_to_end(const PatchDataset& data, const ClassifierModel* gce, const ClassifierModel* lce,
                            GeneratorModel& generator, DiscriminatorModel* discriminator, const E2EOptions& options,
                            std::mt19937_64& rng) {
  const AblationConfig& a = generator.arch.ablation;
  a.validate();
  if (data.size() == 0) fail(ErrorCode::kInvalidArgument, "train_end_to_end: empty dataset");
  if (options.epochs <= 0) fail(ErrorCode::kInvalidArgument, "train_end_to_end: epochs must be positive");
  if (a.use_gce) require_frozen(gce, "global context estimator");
  if (a.use_lce) require_frozen(lce, "local context estimator");
  const bool adversarial = a.use_adversarial && options.lambda_a > 0.0f;
  if (adversarial && !discriminator) fail(ErrorCode::kInvalidArgument, "train_end_to_end: adversarial run needs a discriminator");

  generator.params.set_all_trainable(true);
  OptimizerState<float> gen_opt(options.learning_rate, options.momentum);
  OptimizerState<float> disc_opt(options.discriminator_learning_rate, options.momentum);
  E2EHistory history;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    gen_opt.learning_rate = stepped_rate(options.learning_rate, epoch, options.decay_epoch, options.decay_factor);
    disc_opt.learning_rate =
        stepped_rate(options.discriminator_learning_rate, epoch, options.decay_epoch, options.decay_factor);
    double sum_t = 0.0, sum_e = 0.0;
    const auto order = epoch_order(data.size(), options.steps_per_epoch, rng);
    for (std::size_t idx : order) {
      const Patch patch = data.get(idx);
      ContextMap gc, lc;
      if (a.use_gce) gc = build_global_context_train(patch.image, *gce);
      if (a.use_lce) lc = build_local_context(patch.image, *lce);
      const DensityMap target = training_target(generator.arch, patch.density);

      Tape<float> tape;
      const BoundParams<float> p = bind(tape, generator.params);
      const auto ctx = context_vars(tape, a, a.use_gce ? &gc : nullptr, a.use_lce ? &lc : nullptr);
      Var<float> pred = generator_forward(generator.arch, p, tape.constant(patch.image), ctx);
      Var<float> le = euclidean_loss(pred, tape.constant(target), options.squared_loss);
      Var<float> lt = le;
      if (adversarial) {
        // the discriminator only relays gradients to the generator output here
        const BoundParams<float> dp = bind(tape, discriminator->params, true);
        lt = total_loss(le, adversarial_loss(discriminator_forward(discriminator->arch, dp, pred)), options.lambda_a);
      }
      sum_e += le.value()[0];
      sum_t += lt.value()[0];
      tape.backward(lt);
      apply_sgd(generator.params, p, tape, gen_opt);

      if (adversarial) {
        discriminator_step(target, pred.value(), *discriminator, disc_opt);
        ++history.discriminator_updates;
      }
    }
    history.total.push_back(sum_t / static_cast<double>(order.size()));
    history.euclidean.push_back(sum_e / static_cast<double>(order.size()));
  }
  return history;
}

namespace {

// Full-resolution map for one image or tile, before clamping. Tiles are processed like training
// crops, so their global context comes from the whole-tile classification.
DensityMap infer_region(const Image& image, const ClassifierModel* gce, const ClassifierModel* lce,
                        const GeneratorModel& generator, bool as_crop) {
  const AblationConfig& a = generator.arch.ablation;
  ContextMap gc, lc;
  if (a.use_gce) gc = as_crop ? build_global_context_train(image, *gce) : build_global_context_infer(image, *gce);
  if (a.use_lce) lc = build_local_context(image, *lce);
  DensityMap out = generate(generator, image, a.use_gce ? &gc : nullptr, a.use_lce ? &lc : nullptr);
  float gain = 1.0f / generator.arch.density_scale;
  if (!a.has_fcnn()) {
    out = mass_upsample(out, 4);
    gain *= 16.0f;
  }
  for (float& v : out.data()) v *= gain;
  return out;
}

}  // namespace

Inference infer(const Image& image, const ClassifierModel* gce, const ClassifierModel* lce,
                const GeneratorModel& generator) {
  const AblationConfig& a = generator.arch.ablation;
  const int h = image_height(image), w = image_width(image);
  if (h % 4 != 0 || w % 4 != 0) {
    fail(ErrorCode::kShapeMismatch, "infer: image " + std::to_string(w) + "x" + std::to_string(h) +
                                        " must have width and height divisible by 4");
  }
  if (a.use_gce && !gce) fail(ErrorCode::kInvalidArgument, "infer: configuration needs the global context estimator");
  if (a.use_lce && !lce) fail(ErrorCode::kInvalidArgument, "infer: configuration needs the local context estimator");

  const int tile = generator.arch.infer_tile;
  DensityMap out;
  if (tile <= 0 || (tile >= h && tile >= w)) {
    out = infer_region(image, gce, lce, generator, false);
  } else {
    // overlapping edge tiles are averaged
    const int th = std::min(tile, h), tw = std::min(tile, w);
    out = DensityMap({1, h, w});
    std::vector<int> cover(static_cast<std::size_t>(h) * w, 0);
    for (int y0 : window_origins(h, th, th)) {
      for (int x0 : window_origins(w, tw, tw)) {
        const DensityMap part = infer_region(crop(image, {x0, y0, tw, th}), gce, lce, generator, true);
        for (int y = 0; y < th; ++y)
          for (int x = 0; x < tw; ++x) {
            out.at(0, y0 + y, x0 + x) += part.at(0, y, x);
            ++cover[static_cast<std::size_t>(y0 + y) * w + x0 + x];
          }
      }
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= static_cast<float>(cover[i]);
  }
  for (float& v : out.data()) v = std::max(v, 0.0f);
  return {out, count_of(out)};
}

#define CPCNN_INSTANTIATE(T)                                                                                      \
  template void add_generator_params<T>(ParameterStore<T>&, const GeneratorArch&, std::mt19937_64&);            \
  template void add_discriminator_params<T>(ParameterStore<T>&, const DiscriminatorArch&, std::mt19937_64&);                             \
  template Var<T> dme_forward<T>(const GeneratorArch&, const BoundParams<T>&, Var<T>);                          \
  template Var<T> generator_forward<T>(const GeneratorArch&, const BoundParams<T>&, Var<T>,                     \
                                       const std::vector<Var<T>>&);                                             \
  template Var<T> discriminator_forward<T>(const DiscriminatorArch&, const BoundParams<T>&, Var<T>);                                      \
  template Var<T> euclidean_loss<T>(Var<T>, Var<T>, bool);                                                      \
  template Var<T> adversarial_loss<T>(Var<T>);                                                                  \
  template Var<T> total_loss<T>(Var<T>, Var<T>, T);                                                             \
  template Var<T> discriminator_loss<T>(Var<T>, Var<T>);

CPCNN_INSTANTIATE(float)
CPCNN_INSTANTIATE(double)
#undef CPCNN_INSTANTIATE

}  // namespace cpcnn
