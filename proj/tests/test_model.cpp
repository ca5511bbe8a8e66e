#include <doctest.h>

#include <cmath>
#include <sstream>

#include "samlab/errors.hpp"
#include "samlab/model.hpp"
#include "samlab/optim.hpp"
#include "test_util.hpp"

using namespace samlab;
using namespace samlab::model;

namespace {

const std::array<double, 4> kX{0.3, 0.3, -0.8, 0.45};

}  // namespace

TEST_CASE("logit is the v-weighted sum of the two features") {
  ModelState m = testing::random_model(1);
  m.v_easy = 2.0;
  m.v_hard = 3.0;
  const FeaturePair f = features(m, kX);
  CHECK(logit(m, kX) == doctest::Approx(2.0 * f.phi_easy + 3.0 * f.phi_hard).epsilon(1e-15));
  m.v_easy = m.v_hard = 0.0;
  CHECK(logit(m, kX) == 0.0);
  m.v_easy = 1.0;
  CHECK(logit(m, kX) == f.phi_easy);
}

TEST_CASE("logit is linear in v for fixed theta") {
  ModelState m = testing::random_model(2);
  ModelState a = m, b = m, sum = m;
  a.v_easy = 0.7, a.v_hard = -1.1;
  b.v_easy = -0.2, b.v_hard = 2.5;
  sum.v_easy = a.v_easy + b.v_easy;
  sum.v_hard = a.v_hard + b.v_hard;
  CHECK(logit(sum, kX) == doctest::Approx(logit(a, kX) + logit(b, kX)).epsilon(1e-14));
}

TEST_CASE("features are disentangled") {
  const ModelState m = testing::random_model(3);
  const FeaturePair base = features(m, kX);
  auto moved = kX;
  moved[2] += 0.37;
  moved[3] -= 1.2;
  CHECK(features(m, moved).phi_easy == base.phi_easy);
  moved = kX;
  moved[0] += 0.5;
  moved[1] += 0.5;
  CHECK(features(m, moved).phi_hard == base.phi_hard);
  // A zero hard input gives the same phi_hard whatever the easy input.
  CHECK(features(m, {1, 1, 0, 0}).phi_hard == features(m, {-2, -2, 0, 0}).phi_hard);
}

TEST_CASE("both features share theta") {
  ModelState m = testing::random_model(4);
  const FeaturePair before = features(m, kX);
  for (double& x : m.theta.tensor("ln2.bias").data()) {
    x += 0.5;
  }
  const FeaturePair after = features(m, kX);
  CHECK(after.phi_easy != before.phi_easy);
  CHECK(after.phi_hard != before.phi_hard);
}

TEST_CASE("batch graph matches per-sample evaluation") {
  const ModelState m = testing::random_model(5);
  const auto batch = testing::random_batch(5, 7);
  const BatchFeatures bf = batch_features(m, batch);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const FeaturePair f = features(m, batch[i].x);
    CHECK(bf.phi_easy[i] == doctest::Approx(f.phi_easy).epsilon(1e-14));
    CHECK(bf.phi_hard[i] == doctest::Approx(f.phi_hard).epsilon(1e-14));
  }
}

TEST_CASE("init follows the fan-in rule and is deterministic") {
  const ModelState a = init(11);
  CHECK(a == init(11));
  CHECK_FALSE(a == init(12));
  for (const auto& seg : a.theta.segments()) {
    const auto& shape = seg.value.shape();
    for (double x : seg.value.data()) {
      if (seg.name.ends_with(".weight") && seg.name.starts_with("l")) {
        CHECK(std::abs(x) <= 1.0 / std::sqrt(double(shape[1])));
      } else if (seg.name.ends_with(".gain")) {
        CHECK(x == 1.0);
      } else {
        CHECK(x == 0.0);
      }
    }
  }
  CHECK(std::abs(a.v_easy) <= 1.0 / std::sqrt(2.0));
  CHECK(std::abs(a.v_hard) <= 1.0 / std::sqrt(2.0));
  check_architecture(a.theta);
}

TEST_CASE("architecture check rejects wrong shapes") {
  ModelState m = init(0);
  diff::ParamVector bad;
  for (const auto& seg : m.theta.segments()) {
    bad.add(seg.name, seg.name == "l3.bias" ? diff::Tensor::vector({0, 0}) : seg.value);
  }
  CHECK_THROWS_AS(check_architecture(bad), ContractError);
}

TEST_CASE("all_params flattening puts v last") {
  const ModelState m = testing::random_model(6);
  const auto all = m.all_params();
  REQUIRE(all.segments().back().name == "v");
  CHECK(all.tensor("v")[0] == m.v_easy);
  CHECK(all.tensor("v")[1] == m.v_hard);
  CHECK(ModelState::from_params(all) == m);
}

TEST_CASE("probe error is orientation invariant") {
  data::ToySpec spec;
  spec.n = 300;
  const auto probe = data::generate_probe_set(spec, 400);
  ModelState m = testing::random_model(7);
  const double e = probe_error_toy(m, probe, Feature::hard);
  // Negate phi (last affine layer) and v_hard together.
  ModelState flipped = m;
  for (const char* name : {"l3.weight", "l3.bias"}) {
    for (double& x : flipped.theta.tensor(name).data()) {
      x = -x;
    }
  }
  flipped.v_hard = -m.v_hard;
  flipped.v_easy = -m.v_easy;
  CHECK(probe_error_toy(flipped, probe, Feature::hard) == e);
  CHECK(probe_error_toy(flipped, probe, Feature::easy) == probe_error_toy(m, probe, Feature::easy));
}

TEST_CASE("probe error rejects an empty dataset") {
  data::ToyDataset empty;
  CHECK_THROWS_AS(probe_error_toy(init(0), empty, Feature::easy), ContractError);
}

TEST_CASE("a trained model reads the easy feature from the probe set") {
  data::ToySpec spec;
  const auto train_data = data::generate(spec);
  optim::TrainConfig cfg;
  cfg.steps = 3000;
  const auto result = optim::train(cfg, train_data);
  const auto probe = data::generate_probe_set(spec, 1000);
  CHECK(probe_error_toy(result.state, probe, Feature::easy) <= 0.05);
  CHECK(train_error(result.state, train_data.samples) <= 0.02);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const ModelState m = testing::random_model(8);
  std::stringstream ss;
  write_checkpoint(m, 42, ss);
  const Checkpoint c = read_checkpoint(ss);
  CHECK(c.seed == 42);
  CHECK(c.state == m);
}

TEST_CASE("checkpoint with another architecture is refused") {
  std::stringstream ss;
  write_checkpoint(init(0), 0, ss);
  std::string text = ss.str();
  const auto pos = text.find("arch ") + 5;
  text[pos] = text[pos] == '0' ? '1' : '0';
  std::stringstream tampered(text);
  CHECK_THROWS_AS(read_checkpoint(tampered), ContractError);
  std::stringstream junk("hello 1\n");
  CHECK_THROWS_AS(read_checkpoint(junk), ContractError);
}
