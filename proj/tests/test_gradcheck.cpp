// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cmath>

#include "cpcnn/gradcheck.hpp"
#include "cpcnn/layers.hpp"
#include "cpcnn/ops.hpp"
#include "doctest.h"

using namespace cpcnn;

namespace {

/// x^3 whose backward is off by a constant factor, standing in for a broken kernel.
Var<double> corrupted_cube(Var<double> x, double factor) {
  Tensor<double> out = x.value();
  for (double& v : out.data()) v = v * v * v;
  return x.tape->record("corrupted_cube", std::move(out), {x.id}, [x, factor](Tape<double>& t, NodeId self) {
    const Tensor<double> g = t.grad(self);
    Tensor<double>& gx = t.grad_buffer(x.id);
    const Tensor<double>& xv = t.value(x.id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * 3.0 * xv[i] * xv[i] * g[i];
  });
}

GradFn cube_loss(double factor) {
  return [factor](Tape<double>&, const std::vector<Var<double>>& v) { return sum(corrupted_cube(v[0], factor)); };
}

}  // namespace

TEST_CASE("harness accepts a correct backward and flags a corrupted one") {
  const std::vector<Tensor<double>> x{Tensor<double>({4}, {0.5, -1.0, 2.0, 0.3})};
  CHECK(run_gradcheck("cube", cube_loss(1.0), x, kLayerGradTolerance).passed());
  const GradCheck bad = run_gradcheck("cube", cube_loss(1.01), x, kLayerGradTolerance);
  CHECK_FALSE(bad.passed());
  CHECK(bad.max_rel_error > 5e-3);

  FdOptions dir_only;
  dir_only.samples_per_input = 1;
  dir_only.directions = 3;
  CHECK_FALSE(run_gradcheck("cube", cube_loss(0.9), x, kCompositeGradTolerance, dir_only).passed());
}

TEST_CASE("central difference of a known function") {
  // d/dx sum(x^2) = 2x; the central difference is exact for quadratics
  const GradFn fn = [](Tape<double>&, const std::vector<Var<double>>& v) { return sum(square(v[0])); };
  const FdResult r = finite_difference_check(fn, {Tensor<double>({3}, {1.0, -2.0, 0.25})});
  CHECK(r.max_rel_error < 1e-9);
  CHECK(r.probes == 3);
  CHECK(r.rejected == 0);
}

TEST_CASE("probes straddling a ReLU kink are rejected, not scored") {
  const GradFn fn = [](Tape<double>&, const std::vector<Var<double>>& v) { return sum(relu(v[0])); };
  const FdResult r = finite_difference_check(fn, {Tensor<double>({3}, {2e-4, 0.5, -0.7})});
  CHECK(r.rejected == 1);
  CHECK(r.probes == 2);
  CHECK(r.max_rel_error < 1e-9);
  CHECK_FALSE(run_gradcheck("relu", fn, {Tensor<double>({1}, {2e-4})}, kLayerGradTolerance).passed());
}

TEST_CASE("every layer and the composite networks pass within budget") {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<GradCheck> checks = all_gradchecks();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(checks.size() >= 19);
  for (const GradCheck& c : checks) {
    INFO(c.name << ": " << c.max_rel_error << " over " << c.probes << " probes, " << c.rejected << " rejected");
    CHECK(c.passed());
  }
  CHECK(secs < 60.0);
  MESSAGE("gradcheck wall time " << secs << " s");
}
