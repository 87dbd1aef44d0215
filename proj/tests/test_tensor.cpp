// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>
#include <tuple>

#include "cpcnn/gemm.hpp"
#include "cpcnn/ops.hpp"
#include "cpcnn/optimizer.hpp"
#include "cpcnn/params.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cpcnn;

TEST_CASE("elementwise arithmetic") {
  Tensor<float> a({2}, {1, 2});
  Tensor<float> b({2}, {3, 4});
  CHECK(tensor_add(a, b) == Tensor<float>({2}, {4, 6}));
  CHECK(tensor_add(a, Tensor<float>({2})) == a);
  CHECK(tensor_scale(Tensor<float>({2}, {2, 4}), 0.5f) == Tensor<float>({2}, {1, 2}));
  CHECK(tensor_mul(a, b) == Tensor<float>({2}, {3, 8}));
}

TEST_CASE("shape mismatch names both shapes") {
  Tensor<float> a({2, 3});
  Tensor<float> b({3, 2});
  try {
    (void)tensor_add(a, b);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShapeMismatch);
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[3,2]") != std::string::npos);
  }
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), Error);
}

TEST_CASE("traced add/scale records nodes only when traced") {
  Tape<float> tape;
  Var<float> c1 = tape.constant(Tensor<float>({2}, {1, 2}));
  Var<float> c2 = tape.constant(Tensor<float>({2}, {3, 4}));
  Var<float> s = add(c1, c2);
  CHECK_FALSE(s.requires_grad());
  Var<float> x = tape.leaf(Tensor<float>({2}, {1, 2}));
  Var<float> y = add(x, c2);
  CHECK(y.requires_grad());
  CHECK(y.value() == Tensor<float>({2}, {4, 6}));
  CHECK(scale(x, 0.5f).value() == Tensor<float>({2}, {0.5f, 1.0f}));
}

TEST_CASE("backward of sum is ones") {
  Tape<double> tape;
  Var<double> x = tape.leaf(Tensor<double>({3}, {0.3, -2, 5}));
  tape.backward(sum(x));
  CHECK(tape.grad(x.id) == Tensor<double>({3}, {1, 1, 1}));
}

TEST_CASE("backward of sum(x*x) is 2x") {
  Tape<double> tape;
  Var<double> x = tape.leaf(Tensor<double>({3}, {1, 2, 3}));
  tape.backward(sum(mul(x, x)));
  CHECK(tape.grad(x.id) == Tensor<double>({3}, {2, 4, 6}));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape<double> tape;
  Var<double> x = tape.leaf(Tensor<double>({3}, {1, 2, 3}));
  CHECK_THROWS_AS(tape.backward(x), Error);
}

TEST_CASE("untouched parameters get zero gradient") {
  Tape<double> tape;
  Var<double> x = tape.leaf(Tensor<double>({2}, {1, 2}));
  Var<double> unused = tape.leaf(Tensor<double>({4}, 7.0));
  tape.backward(sum(x));
  CHECK(tape.grad(unused.id) == Tensor<double>({4}));
}

TEST_CASE("fan-out gradients accumulate") {
  Tape<double> tape;
  Var<double> x = tape.leaf(Tensor<double>({2}, {1, 2}));
  Var<double> y = add(scale(x, 3.0), x);
  tape.backward(sum(y));
  CHECK(tape.grad(x.id) == Tensor<double>({2}, {4, 4}));
}

TEST_CASE("tape is topologically ordered and each node is visited once") {
  Tape<double> tape;
  Var<double> x = tape.leaf(Tensor<double>({2}, {1, 2}));
  Var<double> a = scale(x, 2.0);
  Var<double> b = add(a, x);
  Var<double> c = mul(b, a);
  Var<double> loss = sum(c);
  for (NodeId id = 0; id < static_cast<NodeId>(tape.size()); ++id) {
    for (NodeId in : tape.inputs(id)) CHECK(in < id);
  }
  tape.backward(loss);
  CHECK(tape.visited() == 4);  // scale, add, mul, sum
  // d/dx [(3x)(2x)] = 12x
  CHECK(tape.grad(x.id) == Tensor<double>({2}, {12, 24}));
}

TEST_CASE("tape linearity: add/scale chains are exact") {
  std::mt19937_64 rng(5);
  Tensor<double> xv = testutil::random_tensor({16}, rng);
  Tape<double> tape;
  Var<double> x = tape.leaf(xv);
  Var<double> y = scale(add(scale(x, 0.25), add_scalar(x, 3.0)), -2.0);
  tape.backward(sum(y));
  const Tensor<double> g = tape.grad(x.id);
  for (double v : g.data()) CHECK(v == -2.5);
}

TEST_CASE("sgd_step update rule") {
  SUBCASE("plain step") {
    Tensor<double> p({1}, 1.0);
    std::vector<Tensor<double>*> ps{&p};
    std::vector<Tensor<double>> gs{Tensor<double>({1}, 1.0)};
    OptimizerState<double> st(0.1, 0.0);
    sgd_step<double>(ps, gs, st);
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-15));
  }
  SUBCASE("zero gradient leaves parameter unchanged") {
    Tensor<double> p({1}, 1.0);
    std::vector<Tensor<double>*> ps{&p};
    std::vector<Tensor<double>> gs{Tensor<double>({1}, 0.0)};
    OptimizerState<double> st(0.1, 0.9);
    sgd_step<double>(ps, gs, st);
    sgd_step<double>(ps, gs, st);
    CHECK(p[0] == 1.0);
  }
  SUBCASE("two momentum steps") {
    // hand iteration: v1 = -0.1, v2 = 0.9*(-0.1) - 0.1 = -0.19, total drop 0.29
    Tensor<double> p({1}, 1.0);
    std::vector<Tensor<double>*> ps{&p};
    std::vector<Tensor<double>> gs{Tensor<double>({1}, 1.0)};
    OptimizerState<double> st(0.1, 0.9);
    sgd_step<double>(ps, gs, st);
    sgd_step<double>(ps, gs, st);
    CHECK(st.velocity[0][0] == doctest::Approx(-0.19).epsilon(1e-12));
    CHECK(1.0 - p[0] == doctest::Approx(0.29).epsilon(1e-12));
  }
  SUBCASE("shape mismatch") {
    Tensor<double> p({2}, 1.0);
    std::vector<Tensor<double>*> ps{&p};
    std::vector<Tensor<double>> gs{Tensor<double>({3}, 0.0)};
    OptimizerState<double> st(0.1, 0.9);
    CHECK_THROWS_AS(sgd_step<double>(ps, gs, st), Error);
  }
}

TEST_CASE("step decay of the learning rate") {
  CHECK(stepped_rate(0.1f, 5, 0, 0.1f) == 0.1f);
  CHECK(stepped_rate(0.1f, 3, 4, 0.5f) == 0.1f);
  CHECK(stepped_rate(0.1f, 4, 4, 0.5f) == 0.05f);
  CHECK(stepped_rate(0.1f, 9, 4, 0.5f) == 0.05f);
}

TEST_CASE("frozen parameters are not touched by apply_sgd") {
  ParameterStore<float> store;
  store.add("a", Tensor<float>({2}, 1.0f), 0);
  store.add("b", Tensor<float>({2}, 1.0f), 1);
  store.freeze_prefix(1);
  Tape<float> tape;
  BoundParams<float> bound = bind(tape, store);
  Var<float> loss = sum(add(bound("a"), bound("b")));
  tape.backward(loss);
  OptimizerState<float> st(0.5f, 0.0f);
  apply_sgd(store, bound, tape, st);
  CHECK(store.get("a") == Tensor<float>({2}, 1.0f));
  CHECK(store.get("b") == Tensor<float>({2}, 0.5f));
}

TEST_CASE("gemm matches naive triple loop, including strided operands") {
  std::mt19937_64 rng(11);
  for (auto [m, n, k] : std::vector<std::tuple<int, int, int>>{
           {1, 1, 1}, {3, 5, 7}, {8, 32, 256}, {17, 45, 300}, {64, 100, 600}, {9, 1030, 20}}) {
    Tensor<float> a = testutil::random_tensor<float>({m, k}, rng);
    Tensor<float> b = testutil::random_tensor<float>({k, n}, rng);
    Tensor<float> bt({n, k});
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];
    std::vector<double> ref(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        for (int p = 0; p < k; ++p) ref[i * n + j] += double(a[i * k + p]) * double(b[p * n + j]);
    Tensor<float> c({m, n}, 1.0f);
    gemm<float>(m, n, k, {a.ptr(), k, 1}, {b.ptr(), n, 1}, c.ptr(), n, false);
    Tensor<float> c2({m, n}, 1.0f);
    gemm<float>(m, n, k, {a.ptr(), k, 1}, {bt.ptr(), 1, k}, c2.ptr(), n, true);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-4).scale(std::sqrt(double(k))));
      CHECK(c2[i] == doctest::Approx(ref[i] + 1.0).epsilon(1e-4).scale(std::sqrt(double(k))));
    }
  }
}

TEST_CASE("forward and backward are bit-reproducible") {
  auto run = [] {
    std::mt19937_64 rng(21);
    Tensor<float> xv = testutil::random_tensor<float>({64}, rng);
    Tape<float> tape;
    Var<float> x = tape.leaf(xv);
    Var<float> y = mul(add_scalar(scale(x, 1.7f), 0.3f), x);
    Var<float> loss = mean(y);
    tape.backward(loss);
    return std::make_pair(loss.value(), tape.grad(x.id));
  };
  CHECK(run() == run());
}
