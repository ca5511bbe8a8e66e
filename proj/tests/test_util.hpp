#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "samlab/autodiff.hpp"
#include "samlab/model.hpp"
#include "samlab/optim.hpp"
#include "samlab/rng.hpp"
#include "samlab/toydata.hpp"

namespace samlab::testing {

/// |a - b| / max(|a|, |b|) over whole parameter vectors.
inline double relative_error(const diff::ParamVector& a, const diff::ParamVector& b) {
  diff::ParamVector d = a;
  d.axpy(-1.0, b);
  const double scale = std::max(a.global_norm(), b.global_norm());
  return scale == 0.0 ? 0.0 : d.global_norm() / scale;
}

inline double max_abs_diff(const diff::ParamVector& a, const diff::ParamVector& b) {
  const auto fa = a.flatten();
  const auto fb = b.flatten();
  double m = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    m = std::max(m, std::abs(fa[i] - fb[i]));
  }
  return m;
}

/// A model whose layer-norm gains/biases and v are randomized too, so every
/// parameter carries gradient signal.
inline model::ModelState random_model(std::uint64_t seed) {
  model::ModelState m = model::init(seed);
  Rng rng = make_stream(seed, "test-model");
  for (std::size_t i = 0; i < m.theta.segment_count(); ++i) {
    const auto& name = m.theta.segment(i).name;
    if (name.starts_with("ln") || name.ends_with(".bias")) {
      for (double& x : m.theta.tensor(i).data()) {
        x = name.ends_with(".gain") ? uniform(rng, 0.5, 1.5) : uniform(rng, -0.3, 0.3);
      }
    }
  }
  m.v_easy = uniform(rng, -1.5, 1.5);
  m.v_hard = uniform(rng, -1.5, 1.5);
  return m;
}

inline std::vector<data::ToySample> random_batch(std::uint64_t seed, std::size_t n) {
  data::ToySpec spec;
  spec.n = n;
  spec.seed = seed;
  return data::generate(spec).samples;
}

}  // namespace samlab::testing
