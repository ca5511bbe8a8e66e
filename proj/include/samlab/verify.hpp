#pragma once

// Self-checks of the numerical core: reductions to SGD, gradient
// exactness, the per-example decomposition, the closed-form gradient norms
// and the Taylor prediction of the importance-weight ratio. Each check
// reports its worst observed deviation next to the tolerance it used.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "samlab/model.hpp"
#include "samlab/theory.hpp"

namespace samlab::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

/// init(seed) with layer-norm gains/biases, affine biases and v also
/// randomized, so every parameter carries gradient signal.
model::ModelState random_model(std::uint64_t seed);

/// SAM and LSAM with rho = 0 against SGD: max per-coordinate parameter
/// difference over every step of `steps`-step runs.
CheckResult check_reduction(const std::vector<std::uint64_t>& seeds, std::size_t steps,
                            double tol);

/// Reverse-mode vs central differences on the full toy model and logistic
/// loss; relative error |g_ad - g_fd| / max(|g_ad|, |g_fd|).
CheckResult check_gradients(std::size_t instances, std::size_t batch_size, double h, double tol,
                            std::uint64_t seed = 0);

/// (1/B) sum (-y) lambda g against the autodiff theta gradient at
/// `checkpoints` random steps of a live LSAM run; max absolute difference.
CheckResult check_decomposition(std::size_t checkpoints, double tol, std::uint64_t seed = 0);

/// A network of the given kind with random weights; widths drawn in [2, 6].
analysis::NetworkDescription random_network(analysis::NetKind kind, std::size_t depth,
                                            std::uint64_t seed, std::size_t* input_dim);

/// Closed form vs numeric |grad f|^2 over random instances of one kind and
/// depth; relative error.
CheckResult check_theory(analysis::NetKind kind, std::size_t depth, std::size_t instances,
                         double tol, std::uint64_t seed = 0);

/// Toy model: |measured - predicted| / predicted at rho over random
/// (model, example) pairs.
CheckResult check_taylor_toy(std::size_t instances, double rho, double tol,
                             std::uint64_t seed = 0);

/// Linear logit f = w.x: |measured - predicted| at each rho.
CheckResult check_taylor_linear(std::size_t instances, const std::vector<double>& rhos, double tol,
                                std::uint64_t seed = 0);

/// Two short runs of the same config give identical manifests up to wall
/// time, and sgd equals sam at rho = 0 end to end.
CheckResult check_run_determinism(const std::string& scratch_dir);

/// The whole suite at the tolerances of the acceptance criteria.
std::vector<CheckResult> run_suite(const std::string& scratch_dir);

void print(const CheckResult& r, std::ostream& out);

}  // namespace samlab::verify
