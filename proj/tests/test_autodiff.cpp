#include <doctest.h>

#include <cmath>
#include <numbers>

#include "samlab/autodiff.hpp"
#include "samlab/errors.hpp"
#include "samlab/rng.hpp"
#include "test_util.hpp"

using namespace samlab;
using namespace samlab::diff;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double scale = 1.0) {
  Tensor t(std::move(shape), 0.0);
  for (double& x : t.data()) {
    x = scale * standard_normal(rng);
  }
  return t;
}

}  // namespace

TEST_CASE("affine_forward examples") {
  const Tensor id = Tensor::matrix({{1, 0}, {0, 1}});
  CHECK(affine_forward(Tensor::vector({1, 0}), id, Tensor::vector({0, 0})) ==
        Tensor::vector({1, 0}));
  CHECK(affine_forward(Tensor::vector({2, 3}), Tensor::matrix({{1, 1}}), Tensor::vector({-5})) ==
        Tensor::vector({0}));
  const Tensor b = Tensor::vector({0.25, -7});
  CHECK(affine_forward(Tensor::vector({0, 0}), Tensor::matrix({{3, -4}, {9, 2}}), b) == b);
}

TEST_CASE("affine_forward rejects shape mismatch") {
  CHECK_THROWS_AS(affine_forward(Tensor::vector({1, 2, 3}), Tensor::matrix({{1, 1}}),
                                 Tensor::vector({0})),
                  DimensionError);
  CHECK_THROWS_AS(affine_forward(Tensor::vector({1, 2}), Tensor::matrix({{1, 1}}),
                                 Tensor::vector({0, 0})),
                  DimensionError);
}

TEST_CASE("layer_norm_forward examples") {
  const Tensor ones = Tensor::vector({1, 1});
  const Tensor zeros = Tensor::vector({0, 0});
  CHECK(layer_norm_forward(Tensor::vector({1, -1}), ones, zeros, 0.0) == Tensor::vector({1, -1}));
  CHECK(layer_norm_forward(Tensor::vector({2, 0}), ones, zeros, 0.0) == Tensor::vector({1, -1}));
  const Tensor bias = Tensor::vector({0.5, -0.25, 3});
  const Tensor out = layer_norm_forward(Tensor::vector({4, 4, 4}), Tensor::vector({2, 2, 2}), bias,
                                        1e-5);
  CHECK(out == bias);
  CHECK_THROWS_AS(layer_norm_forward(Tensor::vector({1}), Tensor::vector({1}),
                                     Tensor::vector({0}), 1e-5),
                  DegenerateNormalizationError);
}

TEST_CASE("layer_norm output is standardized before the affine part") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(uniform_index(rng, 200));
    const Tensor x = random_tensor(rng, {n}, 3.0);
    const Tensor out = layer_norm_forward(x, Tensor({n}, 1.0), Tensor({n}, 0.0), 1e-5);
    double mean = 0.0;
    for (double v : out.data()) {
      mean += v;
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : out.data()) {
      var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(n);
    double x_mean = 0.0, x_var = 0.0;
    for (double v : x.data()) {
      x_mean += v;
    }
    x_mean /= static_cast<double>(n);
    for (double v : x.data()) {
      x_var += (v - x_mean) * (v - x_mean);
    }
    x_var /= static_cast<double>(n);
    CHECK(std::abs(mean) < 1e-10);
    // eps shrinks the variance to var/(var+eps); exact unit variance with eps=0
    CHECK(std::abs(var - x_var / (x_var + 1e-5)) < 1e-10);
    const Tensor exact = layer_norm_forward(x, Tensor({n}, 1.0), Tensor({n}, 0.0), 0.0);
    double exact_var = 0.0;
    for (double v : exact.data()) {
      exact_var += v * v;
    }
    CHECK(std::abs(exact_var / static_cast<double>(n) - 1.0) < 1e-10);
  }
}

TEST_CASE("backward of simple expressions") {
  SUBCASE("linear function") {
    Tape tape;
    const Var w = tape.parameter("w", Tensor::scalar(2.0));
    const Var x = tape.constant(Tensor::scalar(3.0));
    const Gradient g = tape.backward(dot(w, x));
    CHECK(g.tensor("w").item() == 3.0);
  }
  SUBCASE("inactive rectifier passes no gradient") {
    Tape tape;
    const Var p = tape.parameter("p", Tensor::vector({-5.0}));
    const Var r = relu(p);
    const double one[] = {1.0};
    const Gradient g = tape.backward(weighted_sum(r, one));
    CHECK(g.tensor("p")[0] == 0.0);
  }
  SUBCASE("rectifier at exactly zero has zero subgradient") {
    Tape tape;
    const Var p = tape.parameter("p", Tensor::vector({0.0}));
    const double one[] = {1.0};
    CHECK(tape.backward(weighted_sum(relu(p), one)).tensor("p")[0] == 0.0);
  }
  SUBCASE("non-scalar output is a contract error") {
    Tape tape;
    const Var p = tape.parameter("p", Tensor::vector({1.0, 2.0}));
    CHECK_THROWS_AS(tape.backward(relu(p)), ContractError);
  }
}

TEST_CASE("finite_diff_gradient examples") {
  ParamVector p;
  p.add("p", Tensor::scalar(3.0));
  const Gradient g = finite_diff_gradient(
      [](const ParamVector& q) {
        const double x = q.tensor(0).item();
        return x * x;
      },
      p, 1e-5);
  CHECK(std::abs(g.tensor(0).item() - 6.0) < 1e-8);

  ParamVector many;
  many.add("a", Tensor::vector({1, 2, 3}));
  const Gradient zero = finite_diff_gradient([](const ParamVector&) { return 4.2; }, many, 1e-5);
  CHECK(zero == many.zeros_like());
  CHECK_THROWS_AS(finite_diff_gradient([](const ParamVector&) { return 0.0; }, many, 0.0),
                  ContractError);
}

TEST_CASE("scalar losses") {
  CHECK(logistic_loss(0.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(logistic_loss(0.0, -1.0) == doctest::Approx(0.6931471805599453));
  CHECK(logistic_loss(1e6, 1.0) == 0.0);
  CHECK(logistic_loss(1.0, -1.0) == doctest::Approx(std::log1p(std::numbers::e)).epsilon(1e-15));
  CHECK(logistic_loss(1.0, -1.0) == doctest::Approx(1.3132616875182228));
  CHECK(std::isfinite(logistic_loss(-1e6, 1.0)));
  CHECK(logistic_loss(-1e6, 1.0) == doctest::Approx(1e6));
  CHECK_THROWS_AS(logistic_loss(0.0, 0.0), ContractError);

  CHECK(exponential_loss(0.0, 1.0) == 1.0);
  CHECK(exponential_loss(std::log(2.0), 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(exponential_loss(-std::log(2.0), -1.0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("ParamVector flatten/unflatten and norms") {
  Rng rng(3);
  ParamVector p;
  p.add("a", random_tensor(rng, {3, 4}));
  p.add("b", random_tensor(rng, {5}));
  p.add("c", Tensor::scalar(1.5));
  const auto flat = p.flatten();
  ParamVector q = p.zeros_like();
  q.unflatten(flat);
  CHECK(q == p);
  double ss = 0.0;
  for (double x : flat) {
    ss += x * x;
  }
  CHECK(p.global_norm() == std::sqrt(ss));
  CHECK(p.global_norm() == ParamVector(p).global_norm());
  CHECK_THROWS_AS(q.unflatten(std::vector<double>(3)), DimensionError);
  CHECK_THROWS_AS(p.add("a", Tensor::scalar(0)), ContractError);
}

// Every differentiable op against central differences on random inputs.
TEST_CASE("each op's backward matches finite differences") {
  Rng rng(11);
  const std::vector<double> labels{1, -1, -1, 1, 1, -1};
  for (int trial = 0; trial < 5; ++trial) {
    ParamVector p;
    p.add("x", random_tensor(rng, {3, 6}));
    p.add("w", random_tensor(rng, {5, 6}, 0.5));
    p.add("b", random_tensor(rng, {5}));
    p.add("gain", random_tensor(rng, {5}));
    p.add("beta", random_tensor(rng, {5}));
    p.add("w2", random_tensor(rng, {2, 5}, 0.5));
    p.add("b2", random_tensor(rng, {2}));
    p.add("s", random_tensor(rng, {1}));

    auto build = [&](Tape& tape, const std::vector<Var>& v, bool exponential) {
      Var h = affine(v[0], v[1], v[2]);
      h = relu(layer_norm(h, v[3], v[4], 1e-5));
      h = affine(h, v[5], v[6]);               // [3 x 2]
      Var top = slice_rows(h, 0, 2);           // [2 x 2]
      Var bottom = slice_rows(h, 1, 2);
      Var mixed = add(scale(top, element(v[7], 0)), bottom);
      Var logits = scale(mixed, tape.constant(Tensor::scalar(0.7)));
      (void)tape;
      std::vector<double> y(labels.begin(), labels.begin() + 4);
      Var loss = exponential ? exponential_loss_mean(logits, y) : logistic_loss_mean(logits, y);
      return add(loss, dot(element(v[7], 0), element(v[2], 1)));
    };
    for (bool exponential : {false, true}) {
      Tape tape;
      const Gradient ad = tape.backward(build(tape, tape.parameters(p), exponential));
      const Gradient fd = finite_diff_gradient(
          [&](const ParamVector& q) {
            Tape t;
            return build(t, t.constants(q), exponential).value().item();
          },
          p, 1e-5);
      CHECK(samlab::testing::relative_error(ad, fd) < 1e-6);
      CHECK(ad.all_finite());
    }
  }
}

TEST_CASE("tape can be swept repeatedly") {
  Tape tape;
  const Var a = tape.parameter("a", Tensor::vector({1.0, 2.0}));
  const double w1[] = {1.0, 0.0};
  const double w2[] = {0.0, 3.0};
  const Var s1 = weighted_sum(a, w1);
  const Var s2 = weighted_sum(a, w2);
  CHECK(tape.backward(s1).tensor(0) == Tensor::vector({1.0, 0.0}));
  CHECK(tape.backward(s2).tensor(0) == Tensor::vector({0.0, 3.0}));
}
