#include "samlab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "samlab/analysis.hpp"
#include "samlab/config.hpp"
#include "samlab/csv.hpp"
#include "samlab/optim.hpp"
#include "samlab/rng.hpp"
#include "samlab/runner.hpp"
#include "samlab/toydata.hpp"

namespace samlab::verify {

using analysis::NetKind;
using analysis::NetworkDescription;
using diff::ParamVector;
using diff::Tensor;

namespace {

CheckResult finish(std::string name, double worst, double tol, std::string detail = {}) {
  CheckResult r;
  r.name = std::move(name);
  r.worst = worst;
  r.tolerance = tol;
  r.passed = std::isfinite(worst) && worst <= tol;
  r.detail = std::move(detail);
  return r;
}

double rel(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

ParamVector theta_part(const ParamVector& all) {
  ParamVector out;
  for (const auto& seg : all.segments()) {
    if (seg.name != "v") {
      out.add(seg.name, seg.value);
    }
  }
  return out;
}

std::vector<std::vector<double>> trajectory(const optim::TrainConfig& cfg,
                                            const data::ToyDataset& data) {
  std::vector<std::vector<double>> states;
  const auto result = optim::train(cfg, data, [&](optim::StepContext& ctx) {
    states.push_back(ctx.state.all_params().flatten());
  });
  states.push_back(result.state.all_params().flatten());
  return states;
}

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t({rows, cols}, 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  for (double& x : t.data()) {
    x = scale * standard_normal(rng);
  }
  return t;
}

}  // namespace

model::ModelState random_model(std::uint64_t seed) {
  model::ModelState m = model::init(seed);
  Rng rng = make_stream(seed, "verify-model");
  for (std::size_t i = 0; i < m.theta.segment_count(); ++i) {
    const std::string& name = m.theta.segment(i).name;
    const bool gain = name.ends_with(".gain");
    if (gain || name.ends_with(".bias")) {
      for (double& x : m.theta.tensor(i).data()) {
        x = gain ? uniform(rng, 0.5, 1.5) : uniform(rng, -0.3, 0.3);
      }
    }
  }
  m.v_easy = uniform(rng, -1.5, 1.5);
  m.v_hard = uniform(rng, -1.5, 1.5);
  return m;
}

CheckResult check_reduction(const std::vector<std::uint64_t>& seeds, std::size_t steps,
                            double tol) {
  double worst = 0.0;
  for (std::uint64_t seed : seeds) {
    data::ToySpec spec;
    spec.seed = seed;
    const auto data = data::generate(spec);
    optim::TrainConfig cfg;
    cfg.seed = seed;
    cfg.steps = steps;
    const auto sgd = trajectory(cfg, data);
    for (optim::Mode mode : {optim::Mode::sam, optim::Mode::lsam}) {
      cfg.mode = mode;
      cfg.rho = 0.0;
      const auto other = trajectory(cfg, data);
      for (std::size_t t = 0; t < sgd.size(); ++t) {
        worst = std::max(worst, max_abs_diff(sgd[t], other[t]));
      }
    }
  }
  std::ostringstream d;
  d << seeds.size() << " seeds x " << steps << " steps, max |sam-sgd|, |lsam-sgd| per coordinate";
  return finish("reduction to sgd at rho=0", worst, tol, d.str());
}

namespace {

/// Tape-free forward pass of the toy model. Returns the mean logistic loss
/// and appends every rectifier's active bit to `mask`.
double plain_loss(const ParamVector& all, std::span<const data::ToySample> batch,
                  std::vector<bool>& mask) {
  const auto& t = all;
  double total = 0.0;
  for (const auto& s : batch) {
    double logit = 0.0;
    for (int which = 0; which < 2; ++which) {
      Tensor x = which == 0 ? Tensor::vector({s.x[0], s.x[1], 0.0, 0.0})
                            : Tensor::vector({0.0, 0.0, s.x[2], s.x[3]});
      x = diff::affine_forward(x, t.tensor("l1.weight"), t.tensor("l1.bias"));
      x = diff::layer_norm_forward(x, t.tensor("ln1.gain"), t.tensor("ln1.bias"),
                                   model::kLayerNormEps);
      for (double& z : x.data()) {
        mask.push_back(z > 0.0);
        z = z > 0.0 ? z : 0.0;
      }
      x = diff::affine_forward(x, t.tensor("l2.weight"), t.tensor("l2.bias"));
      x = diff::layer_norm_forward(x, t.tensor("ln2.gain"), t.tensor("ln2.bias"),
                                   model::kLayerNormEps);
      for (double& z : x.data()) {
        mask.push_back(z > 0.0);
        z = z > 0.0 ? z : 0.0;
      }
      x = diff::affine_forward(x, t.tensor("l3.weight"), t.tensor("l3.bias"));
      logit += t.tensor("v")[static_cast<std::size_t>(which)] * x[0];
    }
    total += diff::logistic_loss(logit, s.y);
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace

CheckResult check_gradients(std::size_t instances, std::size_t batch_size, double h, double tol,
                            std::uint64_t seed) {
  // Central differences are only an oracle where the loss is smooth over
  // +-h. Draws where some probe flips a rectifier are replaced by fresh
  // ones and counted.
  double worst = 0.0;
  std::size_t redrawn = 0;
  std::uint64_t draw = 0;
  for (std::size_t done = 0; done < instances; ++draw) {
    const std::uint64_t id = seed * 100000 + draw;
    const model::ModelState m = random_model(id);
    data::ToySpec spec;
    spec.n = batch_size;
    spec.seed = id;
    const auto batch = data::generate(spec).samples;
    const ParamVector params = m.all_params();
    std::vector<bool> base_mask;
    plain_loss(params, batch, base_mask);
    bool crossed = false;
    std::vector<bool> mask;
    const auto fd = diff::finite_diff_gradient(
        [&](const ParamVector& p) {
          mask.clear();
          const double loss = plain_loss(p, batch, mask);
          crossed = crossed || mask != base_mask;
          return loss;
        },
        params, h);
    if (crossed) {
      ++redrawn;
      continue;
    }
    const auto ad = optim::loss_gradient(m, batch, model::LossKind::logistic);
    ParamVector diff = ad;
    diff.axpy(-1.0, fd);
    const double scale = std::max(ad.global_norm(), fd.global_norm());
    worst = std::max(worst, scale == 0.0 ? 0.0 : diff.global_norm() / scale);
    ++done;
  }
  std::ostringstream d;
  d << instances << " random (model, batch of " << batch_size << ") instances, h=" << h << ", "
    << redrawn << " draws replaced because a probe crossed a rectifier kink";
  return finish("autodiff vs central differences", worst, tol, d.str());
}

CheckResult check_decomposition(std::size_t checkpoints, double tol, std::uint64_t seed) {
  data::ToySpec spec;
  spec.seed = seed;
  const auto data = data::generate(spec);
  optim::TrainConfig cfg;
  cfg.mode = optim::Mode::lsam;
  cfg.rho = 0.4;
  cfg.seed = seed;
  cfg.steps = 2000;
  Rng rng = make_stream(seed, "verify-checkpoints");
  std::vector<std::size_t> at;
  while (at.size() < checkpoints) {
    const auto s = static_cast<std::size_t>(uniform_index(rng, cfg.steps));
    if (std::find(at.begin(), at.end(), s) == at.end()) {
      at.push_back(s);
    }
  }
  double worst = 0.0;
  std::size_t checked = 0;
  optim::train(cfg, data, [&](optim::StepContext& ctx) {
    if (std::find(at.begin(), at.end(), ctx.step) == at.end()) {
      return;
    }
    const auto rebuilt = analysis::reconstruct_theta_gradient(analysis::decompose(ctx.state, ctx.batch));
    const auto direct = theta_part(optim::loss_gradient(ctx.state, ctx.batch, model::LossKind::logistic));
    worst = std::max(worst, max_abs_diff(rebuilt.flatten(), direct.flatten()));
    if (ctx.phantom) {
      const auto rebuilt_p =
          analysis::reconstruct_theta_gradient(analysis::decompose_phantom(*ctx.phantom, ctx.batch));
      const auto direct_p = theta_part(
          optim::loss_gradient(ctx.phantom->perturbed, ctx.batch, model::LossKind::logistic));
      worst = std::max(worst, max_abs_diff(rebuilt_p.flatten(), direct_p.flatten()));
    }
    ++checked;
  });
  std::ostringstream d;
  d << checked << " checkpoints of a live LSAM run (real and phantom), max abs difference";
  return finish("gradient decomposition identity", worst, tol, d.str());
}

NetworkDescription random_network(NetKind kind, std::size_t depth, std::uint64_t seed,
                                  std::size_t* input_dim) {
  Rng rng = make_stream(seed, "verify-network", static_cast<std::uint64_t>(kind) * 100 + depth);
  auto width = [&] { return static_cast<std::size_t>(2 + uniform_index(rng, 5)); };
  NetworkDescription net;
  net.kind = kind;
  std::size_t out = kind == NetKind::lsam ? width() : (kind == NetKind::two_layer_linear ? 1 : width());
  for (std::size_t i = 0; i < out; ++i) {
    net.v.push_back(standard_normal(rng));
  }
  if (kind == NetKind::lsam) {
    for (std::size_t i = 0; i < out; ++i) {
      net.phi.push_back(standard_normal(rng));
    }
    *input_dim = 0;
    return net;
  }
  const std::size_t layers = kind == NetKind::two_layer_linear ? 1 : depth - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = width();
    net.weights.push_back(random_matrix(rng, out, in));
    out = in;
  }
  *input_dim = out;
  return net;
}

CheckResult check_theory(NetKind kind, std::size_t depth, std::size_t instances, double tol,
                         std::uint64_t seed) {
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    std::size_t d_in = 0;
    const auto net = random_network(kind, depth, seed * 1000 + i, &d_in);
    Rng rng = make_stream(seed * 1000 + i, "verify-input");
    std::vector<double> x(d_in);
    for (double& v : x) {
      v = standard_normal(rng);
    }
    const double analytic = analysis::theory_feature_grad_norm(net, x).squared_norm;
    const double numeric =
        analysis::numeric_feature_grad_norm(net, x, analysis::default_fd_step(kind));
    worst = std::max(worst, rel(analytic, numeric));
  }
  std::ostringstream d;
  d << instances << " random " << analysis::to_string(kind) << " networks, depth L=" << depth
    << ", relative error of |grad f|^2";
  return finish("closed form " + analysis::to_string(kind) + " L=" + std::to_string(depth), worst,
                tol, d.str());
}

CheckResult check_taylor_toy(std::size_t instances, double rho, double tol, std::uint64_t seed) {
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const auto m = random_model(seed * 1000 + i);
    data::ToySpec spec;
    spec.n = 1;
    spec.seed = seed * 1000 + i;
    const auto s = data::generate(spec).samples.front();
    const double rhos[] = {rho};
    const auto row = analysis::taylor_ratio_check(m, s.x, s.y, rhos).front();
    worst = std::max(worst, std::abs(row.measured - row.predicted) / row.predicted);
  }
  std::ostringstream d;
  d << instances << " random (toy model, example) pairs at rho=" << rho
    << ", |log(l~/l) - rho|grad f|| / (rho|grad f|)";
  return finish("taylor ratio, toy model", worst, tol, d.str());
}

CheckResult check_taylor_linear(std::size_t instances, const std::vector<double>& rhos, double tol,
                                std::uint64_t seed) {
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng = make_stream(seed * 1000 + i, "verify-linear");
    const std::size_t d = 2 + static_cast<std::size_t>(uniform_index(rng, 7));
    std::vector<double> w(d), x(d);
    for (std::size_t k = 0; k < d; ++k) {
      w[k] = standard_normal(rng);
      x[k] = standard_normal(rng);
    }
    const double y = bernoulli(rng, 0.5) ? 1.0 : -1.0;
    ParamVector p;
    p.add("w", Tensor::vector(w));
    const Tensor xt = Tensor::vector(x);
    const analysis::LogitFn f = [&](diff::Tape& tape, const std::vector<diff::Var>& vars) {
      return diff::dot(vars[0], tape.constant(xt));
    };
    for (const auto& row : analysis::taylor_ratio_check(f, p, y, rhos)) {
      worst = std::max(worst, std::abs(row.measured - row.predicted));
    }
  }
  std::ostringstream d;
  d << instances << " random linear models f = w.x, rho in {";
  for (std::size_t k = 0; k < rhos.size(); ++k) {
    d << (k ? "," : "") << rhos[k];
  }
  d << "}, |measured - predicted|";
  return finish("taylor ratio, linear model", worst, tol, d.str());
}

CheckResult check_run_determinism(const std::string& scratch_dir) {
  namespace fs = std::filesystem;
  config::ExperimentConfig cfg;
  cfg.train.steps = 300;
  cfg.train.mode = optim::Mode::lsam;
  cfg.train.rho = 0.2;
  cfg.analysis_every = 100;
  cfg.probe_n = 400;
  cfg.analyses = {config::Analysis::decomp, config::Analysis::lorenz, config::Analysis::ratios,
                  config::Analysis::bins, config::Analysis::theory};
  cfg.out_dir = fs::path(scratch_dir) / "determinism";
  auto a = runner::run(cfg);
  auto b = runner::run(cfg);
  a.wall_time_s = b.wall_time_s = 0.0;
  const bool same = runner::manifest_json(a) == runner::manifest_json(b);

  config::ExperimentConfig sgd = cfg;
  sgd.analyses.clear();
  sgd.train.mode = optim::Mode::sgd;
  sgd.train.rho = 0.0;
  sgd.out_dir = fs::path(scratch_dir) / "determinism_sgd";
  config::ExperimentConfig sam = sgd;
  sam.train.mode = optim::Mode::sam;
  sam.out_dir = fs::path(scratch_dir) / "determinism_sam";
  const auto ms = runner::run(sgd).metrics;
  const auto mm = runner::run(sam).metrics;
  const bool reduce = ms == mm;
  return finish("end-to-end determinism", (same && reduce) ? 0.0 : 1.0, 0.0,
                std::string("repeat run identical: ") + (same ? "yes" : "no") +
                    ", sgd == sam(rho=0) metrics: " + (reduce ? "yes" : "no"));
}

std::vector<CheckResult> run_suite(const std::string& scratch_dir) {
  std::vector<CheckResult> out;
  out.push_back(check_reduction({0, 1, 2, 3, 4}, 100, 1e-12));
  out.push_back(check_gradients(20, 5, 1e-5, 1e-6));
  out.push_back(check_decomposition(10, 1e-12));
  out.push_back(check_theory(NetKind::lsam, 1, 50, 1e-10));
  out.push_back(check_theory(NetKind::two_layer_linear, 2, 50, 1e-10));
  for (std::size_t depth : {3, 4, 5}) {
    out.push_back(check_theory(NetKind::deep_linear, depth, 50, 1e-10));
  }
  out.push_back(check_theory(NetKind::relu_mlp, 3, 50, 1e-8));
  out.push_back(check_taylor_toy(20, 1e-3, 0.01));
  out.push_back(check_taylor_linear(20, {0.0, 0.1, 0.5, 1.0}, 1e-12));
  out.push_back(check_run_determinism(scratch_dir));
  return out;
}

void print(const CheckResult& r, std::ostream& out) {
  out << (r.passed ? "PASS " : "FAIL ") << r.name << "  worst=" << csv::format_double(r.worst)
      << " tol=" << csv::format_double(r.tolerance);
  if (!r.detail.empty()) {
    out << "  (" << r.detail << ")";
  }
  out << '\n';
}

}  // namespace samlab::verify
