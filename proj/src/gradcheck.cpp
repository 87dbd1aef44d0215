// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string_view>

#include "cpcnn/layers.hpp"
#include "cpcnn/ops.hpp"
#include "cpcnn/pipeline.hpp"

namespace cpcnn {

namespace {

/// Every piecewise decision taken by the forward pass on `tape`.
std::vector<std::uint8_t> branch_pattern(const Tape<double>& tape) {
  std::vector<std::uint8_t> p;
  for (NodeId id = 0; id < static_cast<NodeId>(tape.size()); ++id) {
    const std::string_view kind = tape.kind(id);
    if (kind != "relu" && kind != "prelu" && kind != "abs" && kind != "clamp" && kind != "maxpool2") continue;
    const Tensor<double>& in = tape.value(tape.inputs(id)[0]);
    if (kind == "clamp") {
      const Tensor<double>& out = tape.value(id);
      for (std::size_t i = 0; i < in.size(); ++i) p.push_back(in[i] < out[i] ? 0 : (in[i] > out[i] ? 2 : 1));
    } else if (kind != "maxpool2") {
      for (double v : in.data()) p.push_back(v > 0.0 ? 1 : 0);
    } else {
      // winner of each window; odd edges replicate, so clamping the index is enough
      const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
      for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < (h + 1) / 2; ++oy) {
          for (int ox = 0; ox < (w + 1) / 2; ++ox) {
            int best = 0;
            double best_v = 0.0;
            for (int k = 0; k < 4; ++k) {
              const double v = in.at(ch, std::min(2 * oy + k / 2, h - 1), std::min(2 * ox + k % 2, w - 1));
              if (k == 0 || v > best_v) {
                best = k;
                best_v = v;
              }
            }
            p.push_back(static_cast<std::uint8_t>(best));
          }
        }
      }
    }
  }
  return p;
}

struct Evaluation {
  double value = 0.0;
  std::vector<std::uint8_t> pattern;
};

Evaluation eval_at(const GradFn& fn, const std::vector<Tensor<double>>& xs) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& x : xs) vars.push_back(tape.constant(x));
  const double v = fn(tape, vars).value()[0];
  return {v, branch_pattern(tape)};
}

double rel_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

Tensor<double> uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

/// |v| in [margin, 1] with random sign, keeping kinks out of the stencil.
Tensor<double> away_from_zero(Shape shape, std::mt19937_64& rng, double margin = 0.05) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (double& v : t.data()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

/// Shuffled, well-separated levels: every pooling window has a unique max.
Tensor<double> distinct_levels(Shape shape, std::mt19937_64& rng) {
  Tensor<double> t(std::move(shape));
  std::vector<double> levels(t.size());
  for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = 0.05 * static_cast<double>(i) - 1.0;
  std::shuffle(levels.begin(), levels.end(), rng);
  std::copy(levels.begin(), levels.end(), t.data().begin());
  return t;
}

/// sum(out * w) with fixed random w, so each output element has its own O(1) upstream gradient.
Var<double> weighted_sum(Var<double> out) {
  std::mt19937_64 rng(99);
  return sum(mul(out, out.tape->constant(uniform(out.shape(), rng, -1.0, 1.0))));
}

BoundParams<double> leaf_params(const ParameterStore<double>& store, const std::vector<Var<double>>& v,
                                std::size_t first) {
  BoundParams<double> b;
  b.store = &store;
  b.vars.assign(v.begin() + static_cast<std::ptrdiff_t>(first), v.end());
  return b;
}

std::vector<Tensor<double>> with_params(std::vector<Tensor<double>> head, const ParameterStore<double>& store) {
  for (const auto& e : store.entries()) head.push_back(e.value);
  return head;
}

}  // namespace

FdResult finite_difference_check(const GradFn& fn, const std::vector<Tensor<double>>& inputs, const FdOptions& o) {
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& x : inputs) vars.push_back(tape.leaf(x));
    Var<double> loss = fn(tape, vars);
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(tape.grad(v.id));
  }
  const std::vector<std::uint8_t> base = eval_at(fn, inputs).pattern;
  FdResult r;
  auto record = [&](double a, const Evaluation& up, const Evaluation& down) {
    if (up.pattern != base || down.pattern != base) {
      ++r.rejected;
      return false;
    }
    ++r.probes;
    r.max_rel_error = std::max(r.max_rel_error, rel_error(a, (up.value - down.value) / (2.0 * o.step), o.floor));
    return true;
  };

  std::mt19937_64 rng(o.seed);
  std::vector<Tensor<double>> work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<std::size_t> order(inputs[i].size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const bool sampled = o.samples_per_input > 0 && order.size() > o.samples_per_input;
    if (sampled) std::shuffle(order.begin(), order.end(), rng);
    std::size_t accepted = 0;
    for (std::size_t j : order) {
      if (sampled && accepted == o.samples_per_input) break;
      const double orig = work[i][j];
      work[i][j] = orig + o.step;
      const Evaluation up = eval_at(fn, work);
      work[i][j] = orig - o.step;
      const Evaluation down = eval_at(fn, work);
      work[i][j] = orig;
      if (record(analytic[i][j], up, down)) ++accepted;
    }
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  for (int d = 0; d < o.directions; ++d) {
    std::vector<Tensor<double>> dir;
    double norm2 = 0.0;
    for (const auto& x : inputs) {
      Tensor<double> t(x.shape());
      for (double& v : t.data()) {
        v = normal(rng);
        norm2 += v * v;
      }
      dir.push_back(std::move(t));
    }
    const double inv = 1.0 / std::sqrt(norm2);
    double along = 0.0;
    std::vector<Tensor<double>> up = inputs, down = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      for (std::size_t j = 0; j < inputs[i].size(); ++j) {
        const double v = dir[i][j] * inv;
        along += analytic[i][j] * v;
        up[i][j] += o.step * v;
        down[i][j] -= o.step * v;
      }
    }
    record(along, eval_at(fn, up), eval_at(fn, down));
  }
  return r;
}

GradCheck run_gradcheck(const std::string& name, const GradFn& fn, const std::vector<Tensor<double>>& inputs,
                        double threshold, const FdOptions& options) {
  const FdResult r = finite_difference_check(fn, inputs, options);
  return {name, r.max_rel_error, threshold, r.probes, r.rejected};
}

std::vector<GradCheck> layer_gradchecks() {
  std::mt19937_64 rng(2024);
  const double tol = kLayerGradTolerance;
  std::vector<GradCheck> out;
  auto check = [&](const std::string& name, const GradFn& fn, const std::vector<Tensor<double>>& inputs) {
    out.push_back(run_gradcheck(name, fn, inputs, tol));
  };

  check("conv2d k3 same", [](Tape<double>&, const std::vector<Var<double>>& v) {
        return weighted_sum(conv2d(v[0], v[1], v[2], ConvSpec{2, 3, 3}));
      },
      {uniform({2, 5, 6}, rng, -1, 1), uniform({3, 2, 3, 3}, rng, -1, 1), uniform({3}, rng, -1, 1)});
  check("conv2d k3 stride 2", [](Tape<double>&, const std::vector<Var<double>>& v) {
        return weighted_sum(conv2d(v[0], v[1], v[2], ConvSpec{2, 2, 3, 2, 1}));
      },
      {uniform({2, 7, 5}, rng, -1, 1), uniform({2, 2, 3, 3}, rng, -1, 1), uniform({2}, rng, -1, 1)});
  check("transposed_conv2d", [](Tape<double>&, const std::vector<Var<double>>& v) {
        return weighted_sum(transposed_conv2d(v[0], v[1], v[2], TransposedConvSpec{2, 3}));
      },
      {uniform({2, 3, 4}, rng, -1, 1), uniform({2, 3, 4, 4}, rng, -1, 1), uniform({3}, rng, -1, 1)});
  check("maxpool2", [](Tape<double>&, const std::vector<Var<double>>& v) { return weighted_sum(maxpool2(v[0])); },
      {distinct_levels({2, 5, 7}, rng)});
  check("relu", [](Tape<double>&, const std::vector<Var<double>>& v) { return weighted_sum(relu(v[0])); },
      {away_from_zero({3, 4, 4}, rng)});
  check("prelu", [](Tape<double>&, const std::vector<Var<double>>& v) { return weighted_sum(prelu(v[0], v[1])); },
      {away_from_zero({3, 4, 4}, rng), uniform({3}, rng, 0.05, 0.5)});
  check("sigmoid", [](Tape<double>&, const std::vector<Var<double>>& v) { return weighted_sum(sigmoid(v[0])); },
      {uniform({2, 3, 3}, rng, -3, 3)});
  check("fully_connected", [](Tape<double>&, const std::vector<Var<double>>& v) {
        return weighted_sum(fully_connected(v[0], v[1], v[2]));
      },
      {uniform({2, 2, 3}, rng, -1, 1), uniform({4, 12}, rng, -1, 1), uniform({4}, rng, -1, 1)});
  check("dropout", [](Tape<double>&, const std::vector<Var<double>>& v) {
        std::mt19937_64 mask(7);
        return weighted_sum(dropout(v[0], 0.3, Mode::kTrain, mask));
      },
      {uniform({40}, rng, -1, 1)});
  check("softmax_cross_entropy", [](Tape<double>&, const std::vector<Var<double>>& v) {
        return softmax_cross_entropy(v[0], 2);
      },
      {uniform({5}, rng, -2, 2)});
  check("elementwise add/sub/mul/scale", [](Tape<double>&, const std::vector<Var<double>>& v) {
        return weighted_sum(add_scalar(scale(mul(add(v[0], v[1]), sub(v[0], v[1])), 1.5), 0.25));
      },
      {uniform({3, 4}, rng, -1, 1), uniform({3, 4}, rng, -1, 1)});
  check("abs/square/log", [](Tape<double>&, const std::vector<Var<double>>& v) {
        return weighted_sum(add(log(square(v[0])), abs(v[0])));
      },
      {away_from_zero({8}, rng, 0.2)});
  check("clamp/mean", [](Tape<double>&, const std::vector<Var<double>>& v) {
        // values sit inside and outside [-0.5, 0.5], none near the bounds
        return mean(mul(clamp(v[0], -0.5, 0.5), v[0]));
      },
      {Tensor<double>({6}, {-0.9, -0.3, 0.1, 0.35, 0.7, 1.2})});
  check("concat_channels", [](Tape<double>&, const std::vector<Var<double>>& v) {
        return weighted_sum(concat_channels<double>({v[0], v[1]}));
      },
      {uniform({1, 3, 3}, rng, -1, 1), uniform({2, 3, 3}, rng, -1, 1)});
  check("euclidean_loss", [](Tape<double>&, const std::vector<Var<double>>& v) { return euclidean_loss(v[0], v[1]); },
      {away_from_zero({1, 4, 4}, rng), Tensor<double>({1, 4, 4})});
  check("adversarial_loss", [](Tape<double>&, const std::vector<Var<double>>& v) { return adversarial_loss(v[0]); },
      {uniform({1, 2, 2}, rng, 0.2, 0.8)});
  return out;
}

std::vector<GradCheck> composite_gradchecks(int size) {
  std::vector<GradCheck> out;
  std::mt19937_64 rng(404);
  const int q = size / 4;
  FdOptions o;
  o.samples_per_input = 4;
  o.directions = 2;

  for (const AblationConfig& config : {kAblationLadder[2], kAblationLadder[0]}) {
    GeneratorArch arch;
    arch.ablation = config;
    ParameterStore<double> store;
    add_generator_params(store, arch, rng);
    std::vector<Tensor<double>> head{uniform({1, size, size}, rng, 0, 1)};
    if (config.use_gce) head.push_back(uniform({5, q, q}, rng, 0, 1));
    if (config.use_lce) head.push_back(uniform({5, q, q}, rng, 0, 1));
    const std::size_t n_ctx = head.size() - 1;

    // Target offset from the initial prediction by at least 0.05, so |pred - gt|
    // stays differentiable across the stencil.
    Tensor<double> gt;
    {
      Tape<double> tape;
      std::vector<Var<double>> ctx;
      for (std::size_t c = 0; c < n_ctx; ++c) ctx.push_back(tape.constant(head[1 + c]));
      gt = generator_forward(arch, bind(tape, store, true), tape.constant(head[0]), ctx).value();
      Tensor<double> offset = away_from_zero(gt.shape(), rng);
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += offset[i];
    }
    const GradFn fn = [&arch, &store, &gt, n_ctx](Tape<double>& tape, const std::vector<Var<double>>& v) {
      const std::vector<Var<double>> ctx(v.begin() + 1, v.begin() + 1 + static_cast<std::ptrdiff_t>(n_ctx));
      Var<double> pred = generator_forward(arch, leaf_params(store, v, 1 + n_ctx), v[0], ctx);
      return euclidean_loss(pred, tape.constant(gt));
    };
    const std::string name = config.has_fcnn() ? "generator (DME + context + F-CNN)" : "generator (DME + 1x1 head)";
    out.push_back(run_gradcheck(name, fn, with_params(head, store), kCompositeGradTolerance, o));
  }

  // narrow widths: the check covers the code path, not the paper's channel counts
  const DiscriminatorArch darch{{8, 16, 16, 16, 16}};
  ParameterStore<double> dstore;
  add_discriminator_params(dstore, darch, rng);
  const GradFn dfn = [&darch, &dstore](Tape<double>&, const std::vector<Var<double>>& v) {
    return adversarial_loss(discriminator_forward(darch, leaf_params(dstore, v, 1), v[0]));
  };
  out.push_back(run_gradcheck("discriminator (L_A)", dfn, with_params({uniform({1, size, size}, rng, 0, 1)}, dstore),
                              kCompositeGradTolerance, o));
  return out;
}

std::vector<GradCheck> all_gradchecks() {
  std::vector<GradCheck> out = layer_gradchecks();
  for (GradCheck& c : composite_gradchecks()) out.push_back(std::move(c));
  return out;
}

}  // namespace cpcnn
