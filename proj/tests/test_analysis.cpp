#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "samlab/analysis.hpp"
#include "samlab/errors.hpp"
#include "samlab/optim.hpp"
#include "samlab/rng.hpp"
#include "test_util.hpp"

using namespace samlab;
using namespace samlab::analysis;

namespace {

diff::Gradient theta_part(const diff::Gradient& all) {
  diff::Gradient out;
  for (const auto& seg : all.segments()) {
    if (seg.name != "v") {
      out.add(seg.name, seg.value);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("importance weight at zero logit is one half") {
  ModelState m = testing::random_model(1);
  m.v_easy = m.v_hard = 0.0;
  const auto batch = testing::random_batch(1, 3);
  for (double l : decompose(m, batch).lambda) {
    CHECK(l == 0.5);
  }
}

TEST_CASE("importance weight vanishes with a huge margin") {
  ModelState m = testing::random_model(2);
  const auto batch = testing::random_batch(2, 4);
  const auto base = decompose(m, batch, {false});
  // Scale v so that each example has margin 100 in the direction that
  // classifies it correctly.
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ModelState big = m;
    const double s = 100.0 / (base.labels[i] * base.logits[i]);
    big.v_easy *= s;
    big.v_hard *= s;
    const std::vector<data::ToySample> one{batch[i]};
    CHECK(decompose(big, one, {false}).lambda[0] < 1e-30);
  }
}

TEST_CASE("weights stay in the sigmoid range and contributions add to the margin") {
  const ModelState m = testing::random_model(3);
  const auto batch = testing::random_batch(3, 20);
  const auto rec = decompose(m, batch, {false});
  for (std::size_t i = 0; i < rec.size(); ++i) {
    CHECK(rec.lambda[i] > 0.0);
    CHECK(rec.lambda[i] < 1.0);
    CHECK(rec.contrib_easy[i] + rec.contrib_hard[i] ==
          doctest::Approx(rec.labels[i] * rec.logits[i]).epsilon(1e-14));
  }
}

TEST_CASE("decomposition reconstructs the theta gradient") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelState m = testing::random_model(seed);
    const auto batch = testing::random_batch(seed + 50, 5);
    const auto rec = decompose(m, batch);
    const auto g = theta_part(optim::loss_gradient(m, batch, LossKind::logistic));
    CHECK(testing::max_abs_diff(reconstruct_theta_gradient(rec), g) < 1e-12);
    const auto rec_exp = decompose(m, batch, {true, LossKind::exponential});
    const auto g_exp = theta_part(optim::loss_gradient(m, batch, LossKind::exponential));
    CHECK(testing::max_abs_diff(reconstruct_theta_gradient(rec_exp), g_exp) < 1e-12);
  }
  DecompRecord no_grads = decompose(testing::random_model(9), testing::random_batch(9, 2), {false});
  CHECK_THROWS_AS(reconstruct_theta_gradient(no_grads), ContractError);
}

TEST_CASE("phantom decomposition") {
  const ModelState m = testing::random_model(4);
  const auto batch = testing::random_batch(4, 5);
  const auto zero = optim::lsam_phantom(m, batch, 0.0);
  const auto a = decompose(m, batch);
  const auto b = decompose_phantom(zero, batch);
  CHECK(a.lambda == b.lambda);
  const auto ps = optim::lsam_phantom(m, batch, 0.5);
  const auto p = decompose_phantom(ps, batch);
  // With theta unchanged, the phantom g is the real feature gradients
  // recombined with the phantom v.
  ModelState e = m, h = m;
  e.v_easy = 1, e.v_hard = 0;
  h.v_easy = 0, h.v_hard = 1;
  const auto ge = decompose(e, batch).g;
  const auto gh = decompose(h, batch).g;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    diff::Gradient expect = ge[i].zeros_like();
    expect.axpy(ps.perturbed.v_easy, ge[i]);
    expect.axpy(ps.perturbed.v_hard, gh[i]);
    CHECK(testing::relative_error(p.g[i], expect) < 1e-13);
  }
}

TEST_CASE("batched phantom weights follow the batch grouping") {
  const ModelState m = testing::random_model(5);
  const auto samples = testing::random_batch(5, 12);
  const auto pw = batched_phantom_weights(m, samples, 5, 0.4, optim::PhantomMode::last_layer);
  REQUIRE(pw.lambda.size() == 12);
  for (std::size_t start : {0, 5, 10}) {
    const std::size_t n = std::min<std::size_t>(5, 12 - start);
    const auto batch = std::span(samples).subspan(start, n);
    const auto ps = optim::lsam_phantom(m, batch, 0.4);
    const auto rec = decompose_phantom(ps, batch, {false});
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(pw.lambda_phantom[start + i] == rec.lambda[i]);
    }
  }
}

TEST_CASE("lorenz curve examples") {
  const std::vector<double> uniform{1, 1, 1, 1};
  const auto u = lorenz(uniform);
  CHECK(u.gini == doctest::Approx(0.0).epsilon(1e-15));
  for (const auto& [k, c] : u.points) {
    CHECK(c == doctest::Approx(k).epsilon(1e-15));
  }
  const std::vector<double> spike{0, 0, 0, 1};
  const auto s = lorenz(spike);
  REQUIRE(s.points.size() == 5);
  CHECK(s.points[1] == std::pair{0.25, 1.0});
  CHECK(s.points[4] == std::pair{1.0, 1.0});
  const std::vector<double> two{3, 1};
  const auto t = lorenz(two);
  REQUIRE(t.points.size() == 3);
  CHECK(t.points[0] == std::pair{0.0, 0.0});
  CHECK(t.points[1] == std::pair{0.5, 0.75});
  CHECK(t.points[2] == std::pair{1.0, 1.0});
  CHECK(t.gini == doctest::Approx(0.25).epsilon(1e-15));
  const std::vector<double> zeros{0, 0};
  CHECK_THROWS_AS(lorenz(zeros), ContractError);
  const std::vector<double> negative{1, -1};
  CHECK_THROWS_AS(lorenz(negative), ContractError);
}

TEST_CASE("lorenz is invariant to order and scale, concave and monotone") {
  Rng rng = make_stream(7, "lorenz");
  std::vector<double> w(50);
  for (double& x : w) {
    x = uniform(rng, 0.0, 3.0);
  }
  const auto base = lorenz(w);
  auto shuffled = w;
  std::reverse(shuffled.begin(), shuffled.end());
  std::rotate(shuffled.begin(), shuffled.begin() + 17, shuffled.end());
  auto scaled = w;
  for (double& x : scaled) {
    x *= 7.5;
  }
  CHECK(lorenz(shuffled).gini == doctest::Approx(base.gini).epsilon(1e-14));
  CHECK(lorenz(scaled).gini == doctest::Approx(base.gini).epsilon(1e-14));
  CHECK(base.gini >= 0.0);
  CHECK(base.gini < 1.0);
  for (std::size_t i = 1; i < base.points.size(); ++i) {
    CHECK(base.points[i].second >= base.points[i - 1].second);
    if (i + 1 < base.points.size()) {
      const double left = base.points[i].second - base.points[i - 1].second;
      const double right = base.points[i + 1].second - base.points[i].second;
      CHECK(right <= left + 1e-15);
    }
  }
}

TEST_CASE("binned medians on hand-placed points") {
  const std::vector<double> x{0.5, 1.5, 3.9, 4.5, 2.0};
  const std::vector<double> y{0.5, 3.2, 0.1, -1.0, 2.0};
  const std::vector<double> v{1, 2, 3, 5, 4};
  BinSpec spec;
  spec.nx = spec.ny = 4;
  spec.x_range = std::pair{0.0, 4.0};
  spec.y_range = std::pair{0.0, 4.0};
  const auto g = binned_median_importance(x, y, v, spec);
  CHECK(g.count_at(0, 0) == 1);
  CHECK(g.median_at(0, 0) == 1);
  CHECK(g.median_at(1, 3) == 2);
  CHECK(g.count_at(3, 0) == 2);  // 4.5 and -1 fall into the edge bins
  CHECK(g.median_at(3, 0) == 4);
  CHECK(g.median_at(2, 2) == 4);
  std::size_t total = 0;
  for (std::size_t c : g.count) {
    total += c;
  }
  CHECK(total == 5);
  CHECK(std::isnan(g.median_at(1, 1)));
}

TEST_CASE("binned medians degenerate cases") {
  const std::vector<double> x{1, 1.1, 1.2, 1.05};
  const std::vector<double> y{0, 0.1, 0.05, 0.02};
  const std::vector<double> v{4, 1, 3, 2};
  BinSpec one;
  one.nx = one.ny = 1;
  CHECK(binned_median_importance(x, y, v, one).median_at(0, 0) == 2.5);
  const std::vector<double> c{0.3, 0.3, 0.3, 0.3};
  const auto g = binned_median_importance(x, y, c);
  for (std::size_t i = 0; i < g.median.size(); ++i) {
    if (g.count[i] > 0) {
      CHECK(g.median[i] == 0.3);
    }
  }
  const std::vector<double> short_v{1};
  CHECK_THROWS_AS(binned_median_importance(x, y, short_v), DimensionError);
}

TEST_CASE("median and percentile") {
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK(std::isnan(median({})));
  CHECK(percentile({0, 10}, 0.25) == 2.5);
  CHECK(percentile({5, 1, 3}, 1.0) == 5);
}

TEST_CASE("ratio trace and summary") {
  std::vector<optim::StepRecord> recs(3);
  recs[0].v_easy = 2, recs[0].v_hard = 1, recs[0].vt_easy = 2.5, recs[0].vt_hard = 1.5;
  recs[1].v_easy = -1, recs[1].v_hard = 0.5, recs[1].vt_easy = -1.2, recs[1].vt_hard = 0.9;
  recs[2].v_easy = 0, recs[2].v_hard = 1, recs[2].vt_easy = 0, recs[2].vt_hard = 1;
  const auto tr = ratio_trace(recs);
  REQUIRE(tr.size() == 3);
  CHECK(tr[0].real_ratio == 0.5);
  CHECK(tr[0].phantom_ratio == 0.6);
  CHECK(tr[0].easy_scale == 1.25);
  CHECK(tr[0].hard_scale == 1.5);
  CHECK(tr[1].real_ratio == -0.5);
  CHECK(std::isnan(tr[2].real_ratio));
  CHECK(std::isnan(tr[2].easy_scale));
  const std::vector<double> col{1.0, NAN, 3.0};
  CHECK(mean_finite(col) == 2.0);
  const auto s = summarize_ratios(recs);
  CHECK(s.count == 3);
  CHECK(s.mean_ratio == doctest::Approx(2.5 / 3.0).epsilon(1e-15));
  // Phantom, sign-aligned: easy 2.5 + 1.2 + 0, hard 1.5 + 0.9 + 1.
  CHECK(s.mean_phantom_ratio == doctest::Approx(3.4 / 3.7).epsilon(1e-15));
}

TEST_CASE("linear probe on separable and uninformative representations") {
  Rng rng = make_stream(11, "probe");
  std::vector<std::vector<double>> reps;
  std::vector<double> attr;
  for (int i = 0; i < 400; ++i) {
    const double a = i % 2 == 0 ? 1.0 : -1.0;
    reps.push_back({a});
    attr.push_back(a);
  }
  const auto p = fit_linear_probe(reps, attr);
  CHECK(probe_error(p, reps, attr) == 0.0);

  std::vector<std::vector<double>> noise;
  for (int i = 0; i < 400; ++i) {
    noise.push_back({standard_normal(rng), standard_normal(rng)});
  }
  std::vector<double> coin;
  for (int i = 0; i < 400; ++i) {
    coin.push_back(bernoulli(rng, 0.5) ? 1.0 : -1.0);
  }
  const auto q = fit_linear_probe(noise, coin);
  // Train error of a 3-parameter fit on pure noise stays near chance.
  CHECK(std::abs(probe_error(q, noise, coin) - 0.5) < 0.1);
}

TEST_CASE("duplicating the probe data leaves the direction unchanged") {
  Rng rng = make_stream(12, "probe");
  std::vector<std::vector<double>> reps;
  std::vector<double> attr;
  for (int i = 0; i < 100; ++i) {
    const double a = bernoulli(rng, 0.5) ? 1.0 : -1.0;
    reps.push_back({a + 1.5 * standard_normal(rng), standard_normal(rng)});
    attr.push_back(a);
  }
  auto reps2 = reps;
  reps2.insert(reps2.end(), reps.begin(), reps.end());
  auto attr2 = attr;
  attr2.insert(attr2.end(), attr.begin(), attr.end());
  const auto a = fit_linear_probe(reps, attr);
  const auto b = fit_linear_probe(reps2, attr2);
  CHECK(a.converged);
  CHECK(b.weights[0] == doctest::Approx(a.weights[0]).epsilon(1e-6));
  CHECK(b.weights[1] == doctest::Approx(a.weights[1]).epsilon(1e-6));
}

TEST_CASE("constant representations are flagged") {
  const std::vector<std::vector<double>> reps(10, std::vector<double>{2.0, -1.0});
  std::vector<double> attr;
  for (int i = 0; i < 10; ++i) {
    attr.push_back(i < 5 ? 1.0 : -1.0);
  }
  CHECK(fit_linear_probe(reps, attr).degenerate);
}
