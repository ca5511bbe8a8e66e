#include "samlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "samlab/errors.hpp"

namespace samlab::analysis {

using diff::Gradient;
using diff::Tape;
using diff::Var;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double importance(double logit, double y, LossKind loss) {
  return loss == LossKind::logistic ? diff::sigmoid(-y * logit) : std::exp(-y * logit);
}

}  // namespace

DecompRecord decompose(const ModelState& m, std::span<const data::ToySample> batch,
                       const DecompOptions& opts) {
  if (batch.empty()) {
    throw ContractError("decompose: empty batch");
  }
  const model::BatchFeatures f = model::batch_features(m, batch);
  DecompRecord rec;
  const std::size_t b = batch.size();
  rec.labels = model::labels_of(batch);
  rec.logits.resize(b);
  rec.lambda.resize(b);
  rec.contrib_easy.resize(b);
  rec.contrib_hard.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    const double y = rec.labels[i];
    diff::check_label(y);
    rec.logits[i] = f.phi_easy[i] * m.v_easy + f.phi_hard[i] * m.v_hard;
    rec.lambda[i] = importance(rec.logits[i], y, opts.loss);
    rec.contrib_easy[i] = y * m.v_easy * f.phi_easy[i];
    rec.contrib_hard[i] = y * m.v_hard * f.phi_hard[i];
  }
  if (opts.with_gradients) {
    rec.g.reserve(b);
    const std::vector<double> we{m.v_easy};
    const std::vector<double> wh{m.v_hard};
    for (std::size_t i = 0; i < b; ++i) {
      Tape tape;
      const model::Graph g =
          model::build_graph(tape, m, batch.subspan(i, 1), model::Trainable::theta_only);
      const Var s = diff::add(diff::weighted_sum(g.phi_easy, we), diff::weighted_sum(g.phi_hard, wh));
      rec.g.push_back(tape.backward(s));
    }
  }
  return rec;
}

DecompRecord decompose_phantom(const optim::PhantomState& ps,
                               std::span<const data::ToySample> batch,
                               const DecompOptions& opts) {
  return decompose(ps.perturbed, batch, opts);
}

Gradient reconstruct_theta_gradient(const DecompRecord& rec) {
  if (rec.g.size() != rec.size() || rec.g.empty()) {
    throw ContractError("reconstruction needs per-example feature gradients");
  }
  Gradient out = rec.g.front().zeros_like();
  const double inv_b = 1.0 / static_cast<double>(rec.size());
  for (std::size_t i = 0; i < rec.size(); ++i) {
    out.axpy(-rec.labels[i] * rec.lambda[i] * inv_b, rec.g[i]);
  }
  return out;
}

PhantomWeights batched_phantom_weights(const ModelState& m,
                                       std::span<const data::ToySample> samples,
                                       std::size_t batch_size, double rho,
                                       optim::PhantomMode mode) {
  if (batch_size < 1) {
    throw ContractError("batch size must be at least 1");
  }
  PhantomWeights out;
  const DecompOptions opts{false, LossKind::logistic};
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const auto batch = samples.subspan(start, std::min(batch_size, samples.size() - start));
    const optim::PhantomState ps = mode == optim::PhantomMode::full
                                       ? optim::sam_phantom(m, batch, rho)
                                       : optim::lsam_phantom(m, batch, rho);
    const DecompRecord real = decompose(m, batch, opts);
    const DecompRecord phantom = decompose_phantom(ps, batch, opts);
    out.lambda.insert(out.lambda.end(), real.lambda.begin(), real.lambda.end());
    out.lambda_phantom.insert(out.lambda_phantom.end(), phantom.lambda.begin(),
                              phantom.lambda.end());
    out.contrib_easy.insert(out.contrib_easy.end(), real.contrib_easy.begin(),
                            real.contrib_easy.end());
    out.contrib_hard.insert(out.contrib_hard.end(), real.contrib_hard.begin(),
                            real.contrib_hard.end());
  }
  return out;
}

LorenzCurve lorenz(std::span<const double> weights) {
  if (weights.empty()) {
    throw ContractError("lorenz: no weights");
  }
  std::vector<double> w(weights.begin(), weights.end());
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw ContractError("lorenz: weights must be finite and nonnegative");
    }
  }
  std::sort(w.begin(), w.end(), std::greater<>());
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) {
    throw ContractError("lorenz: weights sum to zero");
  }
  const double n = static_cast<double>(w.size());
  LorenzCurve curve;
  curve.points.reserve(w.size() + 1);
  curve.points.emplace_back(0.0, 0.0);
  double cum = 0.0;
  double area = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    cum += w[k];
    // the last point is pinned to exactly (1, 1)
    const double share = k + 1 == w.size() ? 1.0 : cum / total;
    const double prev_share = curve.points.back().second;
    area += 0.5 * (prev_share + share) / n;
    curve.points.emplace_back(static_cast<double>(k + 1) / n, share);
  }
  curve.gini = 2.0 * (area - 0.5);
  return curve;
}

double median(std::vector<double> values) {
  if (values.empty()) {
    return kNaN;
  }
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) {
    return upper;
  }
  const double lower =
      *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) {
    return kNaN;
  }
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

std::pair<double, double> axis_range(std::span<const double> v,
                                     const std::optional<std::pair<double, double>>& fixed) {
  std::pair<double, double> r =
      fixed ? *fixed
            : std::pair{percentile({v.begin(), v.end()}, 0.01), percentile({v.begin(), v.end()}, 0.99)};
  if (!(r.second > r.first)) {
    r = {r.first - 0.5, r.first + 0.5};
  }
  return r;
}

std::size_t bin_index(double x, std::pair<double, double> range, std::size_t n) {
  const double t = (x - range.first) / (range.second - range.first);
  if (!(t > 0.0)) {
    return 0;
  }
  const auto idx = static_cast<std::size_t>(t * static_cast<double>(n));
  return std::min(idx, n - 1);
}

}  // namespace

std::size_t BinGrid::bin_x(double x) const { return bin_index(x, x_range, nx); }
std::size_t BinGrid::bin_y(double y) const { return bin_index(y, y_range, ny); }

BinGrid binned_median_importance(std::span<const double> x, std::span<const double> y,
                                 std::span<const double> values, const BinSpec& spec) {
  if (x.size() != y.size() || x.size() != values.size()) {
    throw DimensionError("binned_median_importance: coordinate and value counts differ");
  }
  if (spec.nx < 1 || spec.ny < 1) {
    throw ContractError("binned_median_importance: need at least one bin per axis");
  }
  BinGrid grid;
  grid.nx = spec.nx;
  grid.ny = spec.ny;
  grid.x_range = axis_range(x, spec.x_range);
  grid.y_range = axis_range(y, spec.y_range);
  std::vector<std::vector<double>> members(spec.nx * spec.ny);
  for (std::size_t i = 0; i < x.size(); ++i) {
    members[grid.bin_x(x[i]) * spec.ny + grid.bin_y(y[i])].push_back(values[i]);
  }
  grid.median.resize(members.size());
  grid.count.resize(members.size());
  for (std::size_t c = 0; c < members.size(); ++c) {
    grid.count[c] = members[c].size();
    grid.median[c] = median(std::move(members[c]));
  }
  return grid;
}

namespace {

double safe_ratio(double num, double den) {
  return std::abs(den) > 1e-12 ? num / den : kNaN;
}

}  // namespace

std::vector<RatioPoint> ratio_trace(std::span<const optim::StepRecord> records) {
  std::vector<RatioPoint> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back({r.step, safe_ratio(r.v_hard, r.v_easy), safe_ratio(r.vt_hard, r.vt_easy),
                   safe_ratio(r.vt_easy, r.v_easy), safe_ratio(r.vt_hard, r.v_hard)});
  }
  return out;
}

RatioSummary summarize_ratios(std::span<const optim::StepRecord> records) {
  double real_e = 0.0, real_h = 0.0, ph_e = 0.0, ph_h = 0.0;
  for (const auto& r : records) {
    const double se = r.v_easy < 0.0 ? -1.0 : 1.0;
    const double sh = r.v_hard < 0.0 ? -1.0 : 1.0;
    real_e += std::abs(r.v_easy);
    real_h += std::abs(r.v_hard);
    ph_e += se * r.vt_easy;
    ph_h += sh * r.vt_hard;
  }
  RatioSummary out;
  out.count = records.size();
  out.mean_ratio = safe_ratio(real_h, real_e);
  out.mean_phantom_ratio = safe_ratio(ph_h, ph_e);
  return out;
}

double mean_finite(std::span<const double> values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : kNaN;
}

double LinearProbe::score(std::span<const double> rep) const {
  if (rep.size() != weights.size()) {
    throw DimensionError("probe expects " + std::to_string(weights.size()) + " features");
  }
  double s = bias;
  for (std::size_t k = 0; k < rep.size(); ++k) {
    s += weights[k] * rep[k];
  }
  return s;
}

LinearProbe fit_linear_probe(const std::vector<std::vector<double>>& reps,
                             std::span<const double> attributes, const ProbeOptions& opts) {
  if (reps.empty() || reps.size() != attributes.size()) {
    throw ContractError("fit_linear_probe: need one attribute per representation");
  }
  const std::size_t d = reps.front().size();
  for (const auto& r : reps) {
    if (r.size() != d) {
      throw DimensionError("fit_linear_probe: ragged representations");
    }
  }
  for (double a : attributes) {
    diff::check_label(a);
  }
  LinearProbe probe;
  probe.weights.assign(d, 0.0);
  probe.degenerate = std::all_of(reps.begin(), reps.end(),
                                 [&](const std::vector<double>& r) { return r == reps.front(); });
  const double inv_n = 1.0 / static_cast<double>(reps.size());
  std::vector<double> gw(d);
  for (probe.steps = 0; probe.steps < opts.max_steps; ++probe.steps) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < reps.size(); ++i) {
      const double y = attributes[i];
      const double c = -y * diff::sigmoid(-y * probe.score(reps[i])) * inv_n;
      for (std::size_t k = 0; k < d; ++k) {
        gw[k] += c * reps[i][k];
      }
      gb += c;
    }
    if (!opts.intercept) {
      gb = 0.0;
    }
    double norm_sq = gb * gb;
    for (double g : gw) {
      norm_sq += g * g;
    }
    probe.grad_norm = std::sqrt(norm_sq);
    if (probe.grad_norm < opts.tolerance) {
      probe.converged = true;
      break;
    }
    for (std::size_t k = 0; k < d; ++k) {
      probe.weights[k] -= opts.lr * gw[k];
    }
    probe.bias -= opts.lr * gb;
  }
  return probe;
}

double probe_error(const LinearProbe& probe, const std::vector<std::vector<double>>& reps,
                   std::span<const double> attributes) {
  if (reps.empty() || reps.size() != attributes.size()) {
    throw ContractError("probe_error: need one attribute per representation");
  }
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    const double s = probe.score(reps[i]);
    const double pred = s > 0 ? 1.0 : (s < 0 ? -1.0 : 0.0);
    wrong += pred != attributes[i];
  }
  return static_cast<double>(wrong) / static_cast<double>(reps.size());
}

}  // namespace samlab::analysis
