// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cpcnn/ops.hpp"

namespace cpcnn {

ClassifierArch gce_arch(int input_size) {
  ClassifierArch a;
  a.input_size = input_size;
  a.conv_channels = {8, 16, 32, 32};
  a.hidden = {64};
  a.frozen_prefix = 2;
  return a;
}

ClassifierArch lce_arch(int patch) {
  ClassifierArch a;
  a.input_size = patch;
  a.conv_channels = {8, 16};
  a.hidden = {64, 32};
  a.dropout = 0.25f;
  return a;
}

namespace {

int flattened_size(const ClassifierArch& a) {
  int s = a.input_size;
  for (std::size_t i = 0; i < a.conv_channels.size(); ++i) s = (s + 1) / 2;
  return a.conv_channels.empty() ? s * s : a.conv_channels.back() * s * s;
}

template <typename T>
Tensor<T> he_normal(Shape shape, int fan_in, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> n(0.0, std::sqrt(2.0 / fan_in));
  for (T& v : t.data()) v = static_cast<T>(n(rng));
  return t;
}

void validate(const ClassifierArch& a) {
  if (a.input_size <= 0 || a.kernel <= 0 || a.kernel % 2 == 0) {
    fail(ErrorCode::kInvalidArgument, "ClassifierArch: bad input size or kernel");
  }
  if (a.dropout < 0.0f || a.dropout >= 1.0f) fail(ErrorCode::kInvalidArgument, "ClassifierArch: dropout outside [0,1)");
  if (a.frozen_prefix < 0 || a.frozen_prefix > a.layer_count()) {
    fail(ErrorCode::kInvalidArgument, "ClassifierArch: frozen prefix " + std::to_string(a.frozen_prefix) +
                                          " outside 0.." + std::to_string(a.layer_count()));
  }
}

}  // namespace

template <typename T>
void add_classifier_params(ParameterStore<T>& store, const ClassifierArch& arch, std::mt19937_64& init) {
  validate(arch);
  int layer = 0, in = 1;
  for (int out : arch.conv_channels) {
    const std::string n = "conv" + std::to_string(layer);
    store.add(n + ".w", he_normal<T>({out, in, arch.kernel, arch.kernel}, in * arch.kernel * arch.kernel, init), layer);
    store.add(n + ".b", Tensor<T>({out}), layer);
    in = out;
    ++layer;
  }
  int width = flattened_size(arch);
  std::vector<int> fc = arch.hidden;
  fc.push_back(kNumClasses);
  for (std::size_t i = 0; i < fc.size(); ++i) {
    const std::string n = "fc" + std::to_string(i);
    store.add(n + ".w", he_normal<T>({fc[i], width}, width, init), layer);
    store.add(n + ".b", Tensor<T>({fc[i]}), layer);
    width = fc[i];
    ++layer;
  }
}

ClassifierModel make_classifier(const ClassifierArch& arch, std::mt19937_64& init) {
  ClassifierModel m{arch, {}};
  add_classifier_params(m.params, arch, init);
  return m;
}

template <typename T>
Var<T> classifier_logits(const ClassifierArch& arch, const BoundParams<T>& p, Var<T> x, Mode mode,
                         std::mt19937_64* rng) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[0] != 1 || s[1] != arch.input_size || s[2] != arch.input_size) {
    fail(ErrorCode::kShapeMismatch, "classifier expects [1," + std::to_string(arch.input_size) + "," +
                                        std::to_string(arch.input_size) + "], got " + shape_str(s));
  }
  if (mode == Mode::kTrain && arch.dropout > 0.0f && rng == nullptr) {
    fail(ErrorCode::kInvalidArgument, "classifier_logits: train mode with dropout needs an rng");
  }
  int in = 1;
  for (std::size_t i = 0; i < arch.conv_channels.size(); ++i) {
    const std::string n = "conv" + std::to_string(i);
    x = maxpool2(relu(conv2d(x, p(n + ".w"), p(n + ".b"), ConvSpec{in, arch.conv_channels[i], arch.kernel})));
    in = arch.conv_channels[i];
  }
  for (std::size_t i = 0; i <= arch.hidden.size(); ++i) {
    const std::string n = "fc" + std::to_string(i);
    x = fully_connected(x, p(n + ".w"), p(n + ".b"));
    if (i < arch.hidden.size()) {
      x = relu(x);
      if (arch.dropout > 0.0f && mode == Mode::kTrain) x = dropout(x, static_cast<T>(arch.dropout), mode, *rng);
    }
  }
  return x;
}

Scores classifier_scores(const ClassifierModel& model, const Image& input) {
  Tape<float> tape;
  const BoundParams<float> p = bind(tape, model.params, true);
  const Tensor<float>& logits =
      classifier_logits(model.arch, p, tape.constant(input), Mode::kEval, nullptr).value();
  Scores s{};
  for (int i = 0; i < kNumClasses; ++i) {
    const float z = logits[static_cast<std::size_t>(i)];
    s[static_cast<std::size_t>(i)] = z >= 0 ? 1.0f / (1.0f + std::exp(-z)) : std::exp(z) / (1.0f + std::exp(z));
  }
  return s;
}

Scores classify_image(const ClassifierModel& model, const Image& image) {
  return classifier_scores(model, resize_bilinear(image, model.arch.input_size, model.arch.input_size));
}

int argmax(const Scores& s) { return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin()); }

std::vector<std::size_t> epoch_order(std::size_t size, int steps, std::mt19937_64& rng) {
  std::vector<std::size_t> order(size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = size; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  if (steps > 0 && static_cast<std::size_t>(steps) < size) order.resize(static_cast<std::size_t>(steps));
  return order;
}

std::vector<double> train_classifier(ClassifierModel& model, const LabeledSet& data, const TrainOptions& options,
                                     std::mt19937_64& rng) {
  if (data.size == 0 || !data.get) fail(ErrorCode::kInvalidArgument, "train_classifier: empty dataset");
  if (options.epochs <= 0) fail(ErrorCode::kInvalidArgument, "train_classifier: epochs must be positive");
  model.params.freeze_prefix(model.arch.frozen_prefix);
  OptimizerState<float> opt(options.learning_rate, options.momentum);
  std::vector<double> losses;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    opt.learning_rate = stepped_rate(options.learning_rate, epoch, options.decay_epoch, options.decay_factor);
    double total = 0.0;
    const auto order = epoch_order(data.size, options.steps_per_epoch, rng);
    for (std::size_t idx : order) {
      const LabeledInput item = data.get(idx);
      Tape<float> tape;
      const BoundParams<float> p = bind(tape, model.params);
      Var<float> loss = softmax_cross_entropy(
          classifier_logits(model.arch, p, tape.constant(item.input), Mode::kTrain, &rng), item.label);
      total += loss.value()[0];
      if (model.params.any_trainable()) {
        tape.backward(loss);
        apply_sgd(model.params, p, tape, opt);
      }
    }
    losses.push_back(total / static_cast<double>(order.size()));
  }
  return losses;
}

double classifier_accuracy(const ClassifierModel& model, const LabeledSet& data) {
  if (data.size == 0) fail(ErrorCode::kInvalidArgument, "classifier_accuracy: empty dataset");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size; ++i) {
    const LabeledInput item = data.get(i);
    hits += argmax(classifier_scores(model, item.input)) == item.label ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size);
}

template void add_classifier_params<float>(ParameterStore<float>&, const ClassifierArch&, std::mt19937_64&);
template void add_classifier_params<double>(ParameterStore<double>&, const ClassifierArch&, std::mt19937_64&);
template Var<float> classifier_logits<float>(const ClassifierArch&, const BoundParams<float>&, Var<float>, Mode,
                                             std::mt19937_64*);
template Var<double> classifier_logits<double>(const ClassifierArch&, const BoundParams<double>&, Var<double>, Mode,
                                               std::mt19937_64*);

}  // namespace cpcnn
