#include <doctest.h>

#include <cmath>
#include <numbers>

#include "samlab/errors.hpp"
#include "samlab/theory.hpp"
#include "samlab/verify.hpp"
#include "test_util.hpp"

using namespace samlab;
using namespace samlab::analysis;
using diff::Tensor;

TEST_CASE("lsam closed form is the representation norm") {
  NetworkDescription net;
  net.kind = NetKind::lsam;
  net.v = {0.3, 2.0};
  net.phi = {0.5, -1.0};
  const std::vector<double> x{};
  const auto r = theory_feature_grad_norm(net, x);
  CHECK(r.squared_norm == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(std::sqrt(r.squared_norm) == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
}

TEST_CASE("two-layer linear closed form by hand") {
  NetworkDescription net;
  net.kind = NetKind::two_layer_linear;
  net.v = {1.0};
  net.weights = {Tensor::matrix({{1.0, 0.0}})};
  const std::vector<double> x{3.0, 4.0};
  const auto r = theory_feature_grad_norm(net, x);
  CHECK(r.squared_norm == doctest::Approx(34.0).epsilon(1e-15));
  REQUIRE(r.coefficients.size() == 2);
  CHECK(r.coefficients[0] == 1.0);
  CHECK(r.coefficients[1] == 1.0);
  CHECK(r.layer_norms[0] == 9.0);
  CHECK(r.layer_norms[1] == 25.0);
  CHECK(network_logit(net, x) == 3.0);
}

TEST_CASE("deep linear with two layers reduces to the two-layer form") {
  std::size_t dim = 0;
  NetworkDescription two = verify::random_network(NetKind::two_layer_linear, 2, 3, &dim);
  NetworkDescription deep = two;
  deep.kind = NetKind::deep_linear;
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    x[i] = 0.3 * static_cast<double>(i) - 0.5;
  }
  CHECK(theory_feature_grad_norm(deep, x).squared_norm ==
        doctest::Approx(theory_feature_grad_norm(two, x).squared_norm).epsilon(1e-14));
}

TEST_CASE("closed forms match numeric gradients") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (auto [kind, depth] : {std::pair{NetKind::two_layer_linear, std::size_t{2}},
                               std::pair{NetKind::deep_linear, std::size_t{3}},
                               std::pair{NetKind::deep_linear, std::size_t{5}}}) {
      std::size_t dim = 0;
      const auto net = verify::random_network(kind, depth, seed, &dim);
      std::vector<double> x(dim);
      Rng rng = make_stream(seed, "x");
      for (double& v : x) {
        v = standard_normal(rng);
      }
      const double analytic = theory_feature_grad_norm(net, x).squared_norm;
      const double numeric = numeric_feature_grad_norm(net, x, default_fd_step(kind));
      CHECK(std::abs(analytic - numeric) / analytic < 1e-10);
    }
  }
  CHECK(verify::check_theory(NetKind::relu_mlp, 3, 20, 1e-8).passed);
  CHECK(verify::check_theory(NetKind::lsam, 1, 20, 1e-10).passed);
}

TEST_CASE("relu masks equal the forward active sets") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::size_t dim = 0;
    const auto net = verify::random_network(NetKind::relu_mlp, 4, seed, &dim);
    std::vector<double> x(dim);
    Rng rng = make_stream(seed, "x");
    for (double& v : x) {
      v = standard_normal(rng);
    }
    const auto r = theory_feature_grad_norm(net, x);
    REQUIRE(r.masks.size() == net.weights.size());
    // sigma_{L-1} = relu(W_{L-1} x), ..., sigma_1 = relu(W_1 sigma_2).
    std::vector<double> h = x;
    for (std::size_t i = net.weights.size(); i-- > 0;) {
      const Tensor& w = net.weights[i];
      std::vector<double> next(w.rows(), 0.0);
      for (std::size_t r_ = 0; r_ < w.rows(); ++r_) {
        for (std::size_t c = 0; c < w.cols(); ++c) {
          next[r_] += w.at(r_, c) * h[c];
        }
      }
      std::vector<bool> active(next.size());
      for (std::size_t k = 0; k < next.size(); ++k) {
        active[k] = next[k] > 0.0;
        next[k] = std::max(next[k], 0.0);
      }
      CHECK(r.masks[i] == active);
      h = next;
    }
  }
}

TEST_CASE("kind and architecture mismatch is rejected") {
  NetworkDescription net;
  net.kind = NetKind::two_layer_linear;
  net.v = {1.0, 2.0};
  net.weights = {Tensor::matrix({{1.0, 0.0}})};
  const std::vector<double> x{1.0, 1.0};
  CHECK_THROWS_AS(theory_feature_grad_norm(net, x), samlab::DimensionError);
  NetworkDescription lsam;
  lsam.kind = NetKind::lsam;
  lsam.v = {1.0};
  lsam.phi = {1.0, 2.0};
  CHECK_THROWS_AS(theory_feature_grad_norm(lsam, x), samlab::ContractError);
  CHECK_THROWS_AS(net_kind_from_string("cnn"), samlab::ContractError);
  CHECK(net_kind_from_string(to_string(NetKind::relu_mlp)) == NetKind::relu_mlp);
}

TEST_CASE("taylor ratio on a one-parameter model") {
  // f = w x, exponential loss: lambda~/lambda = exp(rho |x|) exactly.
  const LogitFn f = [](diff::Tape& tape, const std::vector<diff::Var>& p) {
    return diff::scale(tape.constant(Tensor::scalar(-1.5)), p[0]);
  };
  diff::ParamVector w;
  w.add("w", Tensor::scalar(0.8));
  const std::vector<double> rhos{0.0, 0.1, 1.0};
  const auto rows = taylor_ratio_check(f, w, 1.0, rhos);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].measured == 0.0);
  CHECK(rows[0].predicted == 0.0);
  for (const auto& r : rows) {
    CHECK(r.predicted == doctest::Approx(1.5 * r.rho).epsilon(1e-15));
    CHECK(std::exp(r.measured) == doctest::Approx(std::exp(1.5 * r.rho)).epsilon(1e-13));
  }
}

TEST_CASE("taylor ratio on linear and toy models") {
  CHECK(verify::check_taylor_linear(10, {0.0, 0.3, 1.0}, 1e-12).passed);
  const auto toy = verify::check_taylor_toy(5, 1e-3, 0.01);
  CHECK(toy.passed);
  const model::ModelState m = testing::random_model(3);
  const std::vector<double> rhos{0.0};
  const auto rows = taylor_ratio_check(m, {0.2, 0.2, -0.4, 0.3}, 1.0, rhos);
  CHECK(rows.at(0).measured == 0.0);
}
