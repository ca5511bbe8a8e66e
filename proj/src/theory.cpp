#include "samlab/theory.hpp"

#include <cmath>

#include "samlab/errors.hpp"
#include "samlab/optim.hpp"

namespace samlab::analysis {

using diff::ParamVector;
using diff::Tape;
using diff::Tensor;
using diff::Var;

std::string to_string(NetKind k) {
  switch (k) {
    case NetKind::lsam:
      return "lsam";
    case NetKind::two_layer_linear:
      return "two-layer-linear";
    case NetKind::deep_linear:
      return "deep-linear";
    case NetKind::relu_mlp:
      return "relu-mlp";
  }
  return "?";
}

NetKind net_kind_from_string(const std::string& s) {
  for (NetKind k : {NetKind::lsam, NetKind::two_layer_linear, NetKind::deep_linear,
                    NetKind::relu_mlp}) {
    if (to_string(k) == s) {
      return k;
    }
  }
  throw ContractError("unknown network kind '" + s + "'");
}

namespace {

void validate(const NetworkDescription& net, std::size_t input_dim) {
  if (net.v.empty()) {
    throw ContractError("network needs a nonempty last layer v");
  }
  switch (net.kind) {
    case NetKind::lsam:
      if (!net.weights.empty() || net.phi.size() != net.v.size()) {
        throw ContractError("lsam description needs phi of the same size as v and no weights");
      }
      return;
    case NetKind::two_layer_linear:
      if (net.weights.size() != 1) {
        throw ContractError("two-layer-linear description needs exactly one hidden matrix");
      }
      break;
    case NetKind::deep_linear:
    case NetKind::relu_mlp:
      if (net.weights.empty()) {
        throw ContractError(to_string(net.kind) + " description needs at least one matrix");
      }
      break;
  }
  std::size_t out_dim = net.v.size();
  for (const Tensor& w : net.weights) {
    if (w.rank() != 2 || w.dim(0) != out_dim) {
      throw DimensionError("network layer " + w.shape_string() + " does not feed " +
                           std::to_string(out_dim) + " units");
    }
    out_dim = w.dim(1);
  }
  if (out_dim != input_dim) {
    throw DimensionError("network expects input of size " + std::to_string(out_dim) + ", got " +
                         std::to_string(input_dim));
  }
}

/// sigma_j for j = 1..L, index 0 holding sigma_1.
std::vector<std::vector<double>> forward_layers(const NetworkDescription& net,
                                                std::span<const double> x) {
  const std::size_t depth = net.depth();
  std::vector<std::vector<double>> sigma(depth);
  sigma[depth - 1].assign(x.begin(), x.end());
  const bool rectify = net.kind == NetKind::relu_mlp;
  for (std::size_t j = depth - 1; j-- > 0;) {
    const Tensor& w = net.weights[j];
    const std::vector<double>& in = sigma[j + 1];
    std::vector<double> out(w.dim(0), 0.0);
    for (std::size_t r = 0; r < w.dim(0); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < w.dim(1); ++c) {
        acc += w.at(r, c) * in[c];
      }
      out[r] = rectify ? (acc > 0.0 ? acc : 0.0) : acc;
    }
    sigma[j] = std::move(out);
  }
  return sigma;
}

double squared(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) {
    s += x * x;
  }
  return s;
}

}  // namespace

double network_logit(const NetworkDescription& net, std::span<const double> x) {
  if (net.kind == NetKind::lsam) {
    validate(net, 0);
    double f = 0.0;
    for (std::size_t k = 0; k < net.v.size(); ++k) {
      f += net.v[k] * net.phi[k];
    }
    return f;
  }
  validate(net, x.size());
  const auto sigma = forward_layers(net, x);
  double f = 0.0;
  for (std::size_t k = 0; k < net.v.size(); ++k) {
    f += net.v[k] * sigma[0][k];
  }
  return f;
}

TheoryResult theory_feature_grad_norm(const NetworkDescription& net, std::span<const double> x) {
  TheoryResult res;
  if (net.kind == NetKind::lsam) {
    validate(net, 0);
    res.coefficients = {1.0};
    res.layer_norms = {squared(net.phi)};
    res.squared_norm = res.layer_norms[0];
    return res;
  }
  validate(net, x.size());
  const auto sigma = forward_layers(net, x);
  const std::size_t depth = net.depth();
  const bool rectify = net.kind == NetKind::relu_mlp;
  if (rectify) {
    for (std::size_t j = 0; j + 1 < depth; ++j) {
      std::vector<bool> active(sigma[j].size());
      for (std::size_t k = 0; k < active.size(); ++k) {
        active[k] = sigma[j][k] > 0.0;
      }
      res.masks.push_back(std::move(active));
    }
  }
  // u carries v^T A_1 W_1 ... W_{j-2} (transposed) into layer j-1.
  std::vector<double> u = net.v;
  res.coefficients.push_back(1.0);
  for (std::size_t j = 1; j < depth; ++j) {
    if (rectify) {
      for (std::size_t k = 0; k < u.size(); ++k) {
        if (!res.masks[j - 1][k]) {
          u[k] = 0.0;
        }
      }
    }
    res.coefficients.push_back(squared(u));
    const Tensor& w = net.weights[j - 1];
    std::vector<double> next(w.dim(1), 0.0);
    for (std::size_t r = 0; r < w.dim(0); ++r) {
      for (std::size_t c = 0; c < w.dim(1); ++c) {
        next[c] += w.at(r, c) * u[r];
      }
    }
    u = std::move(next);
  }
  for (std::size_t j = 0; j < depth; ++j) {
    res.layer_norms.push_back(squared(sigma[j]));
    res.squared_norm += res.coefficients[j] * res.layer_norms[j];
  }
  return res;
}

ParamVector network_params(const NetworkDescription& net) {
  ParamVector p;
  p.add("v", Tensor::vector(net.v));
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    p.add("W" + std::to_string(i + 1), net.weights[i]);
  }
  return p;
}

NetworkDescription with_params(const NetworkDescription& net, const ParamVector& p) {
  NetworkDescription out = net;
  if (p.segment_count() != net.weights.size() + 1) {
    throw ContractError("parameter vector does not match the network");
  }
  const auto v = p.tensor(0).data();
  out.v.assign(v.begin(), v.end());
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    out.weights[i] = p.tensor(i + 1);
  }
  return out;
}

double numeric_feature_grad_norm(const NetworkDescription& net, std::span<const double> x,
                                 double h) {
  const std::vector<double> input(x.begin(), x.end());
  const auto g = diff::finite_diff_gradient(
      [&](const ParamVector& p) { return network_logit(with_params(net, p), input); },
      network_params(net), h);
  return g.dot(g);
}

double default_fd_step(NetKind kind) { return kind == NetKind::relu_mlp ? 1e-6 : 1e-3; }

std::vector<TaylorRow> taylor_ratio_check(const LogitFn& logit, const ParamVector& w, double y,
                                          std::span<const double> rhos) {
  diff::check_label(y);
  Tape tape;
  const std::vector<Var> vars = tape.parameters(w);
  const Var f = logit(tape, vars);
  const std::vector<double> label{y};
  const Var loss = diff::exponential_loss_mean(f, label);
  const diff::Gradient grad_loss = tape.backward(loss);
  const diff::Gradient grad_f = tape.backward(f);
  const double f0 = f.value().item();
  const double loss_norm = grad_loss.global_norm();

  std::vector<TaylorRow> rows;
  for (double rho : rhos) {
    if (!(rho >= 0.0)) {
      throw ContractError("rho must be nonnegative");
    }
    ParamVector phantom = w;
    if (rho > 0.0 && loss_norm >= optim::kDegenerateGradNorm) {
      phantom.axpy(rho / loss_norm, grad_loss);
    }
    Tape eval;
    const double f1 = logit(eval, eval.constants(phantom)).value().item();
    rows.push_back({rho, -y * (f1 - f0), rho * grad_f.global_norm()});
  }
  return rows;
}

std::vector<TaylorRow> taylor_ratio_check(const model::ModelState& m,
                                          const std::array<double, 4>& x, double y,
                                          std::span<const double> rhos) {
  diff::check_label(y);
  const data::ToySample sample{x, y, y, y};
  const std::span<const data::ToySample> batch(&sample, 1);
  Tape tape;
  const model::Graph g = model::build_graph(tape, m, batch, model::Trainable::all);
  const double f0 = g.logits.value().item();
  const double grad_f_norm = tape.backward(g.logits).global_norm();

  std::vector<TaylorRow> rows;
  for (double rho : rhos) {
    const optim::PhantomState ps = optim::sam_phantom(m, batch, rho, model::LossKind::exponential);
    const double f1 = model::logit(ps.perturbed, x);
    rows.push_back({rho, -y * (f1 - f0), rho * grad_f_norm});
  }
  return rows;
}

}  // namespace samlab::analysis
