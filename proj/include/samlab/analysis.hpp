#pragma once

// Instrumentation of trained models: the per-example split of the theta
// gradient into an importance weight and a feature-gradient term, Lorenz
// curves of importance weights, binned medians, ratio traces and generic
// logistic-regression probes.

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "samlab/autodiff.hpp"
#include "samlab/model.hpp"
#include "samlab/optim.hpp"

namespace samlab::analysis {

using model::LossKind;
using model::ModelState;

/// Per-example decomposition of the theta gradient. For example i with
/// logit f_i:
///   lambda_i = sigma(-y_i f_i)            (exp(-y_i f_i) for the exponential loss)
///   g_i      = v_easy dPhi_easy/dtheta + v_hard dPhi_hard/dtheta
/// so that grad_theta L = (1/B) sum_i (-y_i) lambda_i g_i. A decomposition
/// taken at a phantom state holds the phantom quantities.
struct DecompRecord {
  std::vector<double> labels;
  std::vector<double> logits;
  std::vector<double> lambda;
  std::vector<diff::Gradient> g;  // empty unless gradients were requested
  std::vector<double> contrib_easy;  // y * v_easy * phi_easy
  std::vector<double> contrib_hard;  // y * v_hard * phi_hard

  std::size_t size() const noexcept { return lambda.size(); }
};

struct DecompOptions {
  bool with_gradients = true;
  LossKind loss = LossKind::logistic;
};

DecompRecord decompose(const ModelState& m, std::span<const data::ToySample> batch,
                       const DecompOptions& opts = {});

/// decompose() evaluated at the phantom's perturbed state.
DecompRecord decompose_phantom(const optim::PhantomState& ps,
                               std::span<const data::ToySample> batch,
                               const DecompOptions& opts = {});

/// (1/B) sum_i (-y_i) lambda_i g_i. Needs a record with gradients.
diff::Gradient reconstruct_theta_gradient(const DecompRecord& rec);

/// Importance weights of every sample in `samples`, each evaluated at the
/// phantom its own minibatch would produce. Samples are grouped into
/// consecutive batches of `batch_size` in the given order.
struct PhantomWeights {
  std::vector<double> lambda;
  std::vector<double> lambda_phantom;
  std::vector<double> contrib_easy;
  std::vector<double> contrib_hard;
};
PhantomWeights batched_phantom_weights(const ModelState& m,
                                       std::span<const data::ToySample> samples,
                                       std::size_t batch_size, double rho,
                                       optim::PhantomMode mode);

struct LorenzCurve {
  /// (k/n, share of total weight held by the top k), k = 0..n.
  std::vector<std::pair<double, double>> points;
  double gini = 0.0;
};

/// Descending-sorted cumulative shares; Gini is twice the trapezoid area
/// between the curve and the diagonal.
LorenzCurve lorenz(std::span<const double> weights);

struct BinSpec {
  std::size_t nx = 8;
  std::size_t ny = 8;
  /// Explicit [lo, hi] per axis; defaults to the 1st-99th percentile.
  std::optional<std::pair<double, double>> x_range;
  std::optional<std::pair<double, double>> y_range;
};

struct BinGrid {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::pair<double, double> x_range;
  std::pair<double, double> y_range;
  std::vector<double> median;  // row-major [ix * ny + iy]; NaN when empty
  std::vector<std::size_t> count;

  double median_at(std::size_t ix, std::size_t iy) const { return median[ix * ny + iy]; }
  std::size_t count_at(std::size_t ix, std::size_t iy) const { return count[ix * ny + iy]; }
  std::size_t bin_x(double x) const;
  std::size_t bin_y(double y) const;
};

/// Equal-width 2-D bins over (x, y); the median of `values` per bin. Points
/// outside the range fall into the edge bins.
BinGrid binned_median_importance(std::span<const double> x, std::span<const double> y,
                                 std::span<const double> values, const BinSpec& spec = {});

double median(std::vector<double> values);
/// Linear-interpolated percentile, q in [0, 1].
double percentile(std::vector<double> values, double q);

/// v_hard/v_easy, phantom ratio, and the per-feature phantom scale factors.
struct RatioPoint {
  std::size_t step = 0;
  double real_ratio = 0.0;     // v_hard / v_easy
  double phantom_ratio = 0.0;  // vt_hard / vt_easy
  double easy_scale = 0.0;     // vt_easy / v_easy
  double hard_scale = 0.0;     // vt_hard / v_hard
};
/// Entries whose denominator is within 1e-12 of zero are NaN.
std::vector<RatioPoint> ratio_trace(std::span<const optim::StepRecord> records);
/// Mean of the finite entries of one ratio column; NaN when none.
double mean_finite(std::span<const double> values);

/// Training-long summary of the last-layer weights. Each feature is read in
/// the orientation of its real weight (sign(v) per step), and the ratio is
/// taken between means, so steps where a phantom weight passes through
/// zero do not dominate:
///   mean_ratio         = mean|v_hard| / mean|v_easy|
///   mean_phantom_ratio = mean(sgn(v_hard) vt_hard) / mean(sgn(v_easy) vt_easy)
struct RatioSummary {
  double mean_ratio = 0.0;
  double mean_phantom_ratio = 0.0;
  std::size_t count = 0;
};
RatioSummary summarize_ratios(std::span<const optim::StepRecord> records);

struct ProbeOptions {
  std::size_t max_steps = 20000;
  double lr = 0.5;
  double tolerance = 1e-8;
  bool intercept = true;
};

struct LinearProbe {
  std::vector<double> weights;
  double bias = 0.0;
  std::size_t steps = 0;
  double grad_norm = 0.0;
  bool converged = false;
  bool degenerate = false;  // every representation identical

  double score(std::span<const double> rep) const;
};

/// Full-batch gradient descent on the mean logistic loss of u.phi + b
/// against +-1 attributes.
LinearProbe fit_linear_probe(const std::vector<std::vector<double>>& reps,
                             std::span<const double> attributes, const ProbeOptions& opts = {});

double probe_error(const LinearProbe& probe, const std::vector<std::vector<double>>& reps,
                   std::span<const double> attributes);

}  // namespace samlab::analysis
