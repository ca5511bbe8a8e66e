#include "samlab/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "samlab/errors.hpp"

namespace samlab::diff {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Tensor value) { return record(std::move(value), {}, nullptr); }

Var Tape::parameter(std::string name, Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, nullptr});
  const std::size_t id = nodes_.size() - 1;
  params_.push_back({std::move(name), id});
  return Var(this, id);
}

std::vector<Var> Tape::parameters(const ParamVector& params) {
  std::vector<Var> vars;
  vars.reserve(params.segment_count());
  for (const auto& s : params.segments()) {
    vars.push_back(parameter(s.name, s.value));
  }
  return vars;
}

std::vector<Var> Tape::constants(const ParamVector& params) {
  std::vector<Var> vars;
  vars.reserve(params.segment_count());
  for (const auto& s : params.segments()) {
    vars.push_back(constant(s.value));
  }
  return vars;
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  for (std::size_t in : inputs) {
    needs = needs || nodes_.at(in).needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t node, std::span<const double> delta) {
  Node& n = nodes_[node];
  if (!n.needs_grad) {
    return;
  }
  if (n.grad.empty()) {
    n.grad.assign(n.value.size(), 0.0);
  }
  for (std::size_t i = 0; i < delta.size(); ++i) {
    n.grad[i] += delta[i];
  }
}

std::span<double> Tape::grad_buffer(std::size_t node) {
  Node& n = nodes_[node];
  if (n.grad.empty()) {
    n.grad.assign(n.value.size(), 0.0);
  }
  return n.grad;
}

Gradient Tape::backward(Var output) {
  if (output.tape_ != this) {
    throw ContractError("backward: output belongs to a different tape");
  }
  if (nodes_.at(output.id()).value.size() != 1) {
    throw ContractError("backward: output must be a scalar, got shape " +
                        nodes_[output.id()].value.shape_string());
  }
  for (auto& n : nodes_) {
    n.grad.clear();
  }
  if (nodes_[output.id()].needs_grad) {
    nodes_[output.id()].grad.assign(1, 1.0);
    for (std::size_t i = output.id() + 1; i-- > 0;) {
      if (!nodes_[i].grad.empty() && nodes_[i].backward) {
        nodes_[i].backward(*this, i);
      }
    }
  }
  Gradient g;
  for (const auto& p : params_) {
    const Node& n = nodes_[p.node];
    Tensor t(n.value.shape(), 0.0);
    if (!n.grad.empty()) {
      std::copy(n.grad.begin(), n.grad.end(), t.data().begin());
    }
    g.add(p.name, std::move(t));
  }
  return g;
}

Tensor Tape::grad(Var node) const {
  const Node& n = nodes_.at(node.id());
  Tensor t(n.value.shape(), 0.0);
  if (!n.grad.empty()) {
    std::copy(n.grad.begin(), n.grad.end(), t.data().begin());
  }
  return t;
}

namespace {

void same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) {
    throw ContractError("operands live on different tapes");
  }
}

}  // namespace

Tensor affine_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || bias.rank() != 1 || x.rank() == 0) {
    throw DimensionError("affine: expected x [n] or [r x n], weight [m x n], bias [m]");
  }
  const std::size_t n_out = weight.dim(0);
  const std::size_t n_in = weight.dim(1);
  if (x.cols() != n_in || bias.dim(0) != n_out) {
    throw DimensionError("affine: x " + x.shape_string() + ", weight " + weight.shape_string() +
                         ", bias " + bias.shape_string());
  }
  const std::size_t rows = x.rows();
  Tensor out = x.rank() == 1 ? Tensor({n_out}, 0.0) : Tensor({rows, n_out}, 0.0);
  const double* xs = x.data().data();
  const double* ws = weight.data().data();
  const double* bs = bias.data().data();
  double* os = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xs + r * n_in;
    for (std::size_t j = 0; j < n_out; ++j) {
      const double* wj = ws + j * n_in;
      double acc = 0.0;
      for (std::size_t k = 0; k < n_in; ++k) {
        acc += wj[k] * xr[k];
      }
      os[r * n_out + j] = acc + bs[j];
    }
  }
  return out;
}

Var affine(Var x, Var weight, Var bias) {
  same_tape(x, weight);
  same_tape(x, bias);
  Tape& tape = x.tape();
  Tensor out = affine_forward(x.value(), weight.value(), bias.value());
  const std::size_t xi = x.id(), wi = weight.id(), bi = bias.id();
  return tape.record(std::move(out), {xi, wi, bi}, [xi, wi, bi](Tape& t, std::size_t self) {
    const Tensor& xv = t.node_value(xi);
    const Tensor& wv = t.node_value(wi);
    const std::vector<double>& g = t.node_grad(self);
    const std::size_t n_out = wv.dim(0);
    const std::size_t n_in = wv.dim(1);
    const std::size_t rows = xv.rows();
    if (t.needs_grad(xi)) {
      auto dx = t.grad_buffer(xi);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n_out; ++j) {
          const double gj = g[r * n_out + j];
          if (gj == 0.0) {
            continue;
          }
          const double* wj = wv.data().data() + j * n_in;
          double* dxr = dx.data() + r * n_in;
          for (std::size_t k = 0; k < n_in; ++k) {
            dxr[k] += gj * wj[k];
          }
        }
      }
    }
    if (t.needs_grad(wi)) {
      auto dw = t.grad_buffer(wi);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data().data() + r * n_in;
        for (std::size_t j = 0; j < n_out; ++j) {
          const double gj = g[r * n_out + j];
          if (gj == 0.0) {
            continue;
          }
          double* dwj = dw.data() + j * n_in;
          for (std::size_t k = 0; k < n_in; ++k) {
            dwj[k] += gj * xr[k];
          }
        }
      }
    }
    if (t.needs_grad(bi)) {
      auto db = t.grad_buffer(bi);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n_out; ++j) {
          db[j] += g[r * n_out + j];
        }
      }
    }
  });
}

namespace {

struct NormCache {
  std::vector<double> xhat;
  std::vector<double> inv_std;  // per row
};

NormCache layer_norm_core(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                          Tensor& out) {
  if (x.rank() == 0) {
    throw DimensionError("layer_norm: scalar input");
  }
  const std::size_t n = x.cols();
  if (n < 2) {
    throw DegenerateNormalizationError("layer_norm needs at least 2 units, got " +
                                       std::to_string(n));
  }
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(n) + " entries");
  }
  if (!(eps >= 0.0)) {
    throw ContractError("layer_norm: eps must be nonnegative");
  }
  const std::size_t rows = x.rows();
  NormCache cache{std::vector<double>(x.size()), std::vector<double>(rows)};
  out = Tensor(x.shape(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      mean += xr[k];
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double d = xr[k] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    cache.inv_std[r] = inv;
    for (std::size_t k = 0; k < n; ++k) {
      const double xh = (xr[k] - mean) * inv;
      cache.xhat[r * n + k] = xh;
      out[r * n + k] = gain[k] * xh + bias[k];
    }
  }
  return cache;
}

}  // namespace

Tensor layer_norm_forward(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  Tensor out;
  layer_norm_core(x, gain, bias, eps, out);
  return out;
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  same_tape(x, gain);
  same_tape(x, bias);
  Tensor out;
  NormCache cache = layer_norm_core(x.value(), gain.value(), bias.value(), eps, out);
  const std::size_t xi = x.id(), gi = gain.id(), bi = bias.id();
  return x.tape().record(
      std::move(out), {xi, gi, bi},
      [xi, gi, bi, cache = std::move(cache)](Tape& t, std::size_t self) {
        const Tensor& gv = t.node_value(gi);
        const std::vector<double>& g = t.node_grad(self);
        const std::size_t n = gv.size();
        const std::size_t rows = cache.inv_std.size();
        if (t.needs_grad(gi) || t.needs_grad(bi)) {
          auto dgain = t.grad_buffer(gi);
          auto dbias = t.grad_buffer(bi);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t k = 0; k < n; ++k) {
              dgain[k] += g[r * n + k] * cache.xhat[r * n + k];
              dbias[k] += g[r * n + k];
            }
          }
        }
        if (t.needs_grad(xi)) {
          auto dx = t.grad_buffer(xi);
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t r = 0; r < rows; ++r) {
            double sum_d = 0.0;
            double sum_dx = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
              const double d = g[r * n + k] * gv[k];
              sum_d += d;
              sum_dx += d * cache.xhat[r * n + k];
            }
            const double inv = cache.inv_std[r];
            for (std::size_t k = 0; k < n; ++k) {
              const double d = g[r * n + k] * gv[k];
              dx[r * n + k] +=
                  inv * (d - inv_n * sum_d - cache.xhat[r * n + k] * inv_n * sum_dx);
            }
          }
        }
      });
}

Var relu(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape(), 0.0);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi](Tape& t, std::size_t self) {
    const Tensor& xv = t.node_value(xi);
    const std::vector<double>& g = t.node_grad(self);
    auto dx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) {
        dx[i] += g[i];
      }
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || begin + count > xv.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") of " + xv.shape_string());
  }
  const std::size_t cols = xv.cols();
  std::vector<double> values(xv.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                             xv.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  const std::size_t xi = x.id();
  return x.tape().record(Tensor({count, cols}, std::move(values)), {xi},
                         [xi, begin, cols](Tape& t, std::size_t self) {
                           const std::vector<double>& g = t.node_grad(self);
                           auto dx = t.grad_buffer(xi);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             dx[begin * cols + i] += g[i];
                           }
                         });
}

Var element(Var x, std::size_t index) {
  const Tensor& xv = x.value();
  if (index >= xv.size()) {
    throw DimensionError("element: index " + std::to_string(index) + " out of range for " +
                         xv.shape_string());
  }
  const std::size_t xi = x.id();
  return x.tape().record(Tensor::scalar(xv[index]), {xi}, [xi, index](Tape& t, std::size_t self) {
    t.grad_buffer(xi)[index] += t.node_grad(self)[0];
  });
}

Var scale(Var x, Var s) {
  same_tape(x, s);
  const Tensor& xv = x.value();
  if (s.value().size() != 1) {
    throw DimensionError("scale: factor must be a single element, got " +
                         s.value().shape_string());
  }
  const double sv = s.value().item();
  Tensor out = xv;
  for (double& v : out.data()) {
    v *= sv;
  }
  const std::size_t xi = x.id(), si = s.id();
  return x.tape().record(std::move(out), {xi, si}, [xi, si](Tape& t, std::size_t self) {
    const Tensor& xv = t.node_value(xi);
    const double sv = t.node_value(si).item();
    const std::vector<double>& g = t.node_grad(self);
    if (t.needs_grad(xi)) {
      auto dx = t.grad_buffer(xi);
      for (std::size_t i = 0; i < g.size(); ++i) {
        dx[i] += g[i] * sv;
      }
    }
    if (t.needs_grad(si)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        acc += g[i] * xv[i];
      }
      t.grad_buffer(si)[0] += acc;
    }
  });
}

Var add(Var a, Var b) {
  same_tape(a, b);
  if (!a.value().same_shape(b.value())) {
    throw DimensionError("add: " + a.value().shape_string() + " vs " + b.value().shape_string());
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += b.value()[i];
  }
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const std::vector<double>& g = t.node_grad(self);
    t.accumulate(ai, g);
    t.accumulate(bi, g);
  });
}

Var dot(Var a, Var b) {
  same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.size() != bv.size()) {
    throw DimensionError("dot: " + av.shape_string() + " vs " + bv.shape_string());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    acc += av[i] * bv[i];
  }
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(Tensor::scalar(acc), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const double g = t.node_grad(self)[0];
    const Tensor& av = t.node_value(ai);
    const Tensor& bv = t.node_value(bi);
    if (t.needs_grad(ai)) {
      auto da = t.grad_buffer(ai);
      for (std::size_t i = 0; i < da.size(); ++i) {
        da[i] += g * bv[i];
      }
    }
    if (t.needs_grad(bi)) {
      auto db = t.grad_buffer(bi);
      for (std::size_t i = 0; i < db.size(); ++i) {
        db[i] += g * av[i];
      }
    }
  });
}

Var weighted_sum(Var x, std::span<const double> weights) {
  const Tensor& xv = x.value();
  if (weights.size() != xv.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(weights.size()) + " weights for " +
                         xv.shape_string());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    acc += weights[i] * xv[i];
  }
  const std::size_t xi = x.id();
  return x.tape().record(Tensor::scalar(acc), {xi},
                         [xi, w = std::vector<double>(weights.begin(), weights.end())](
                             Tape& t, std::size_t self) {
                           const double g = t.node_grad(self)[0];
                           auto dx = t.grad_buffer(xi);
                           for (std::size_t i = 0; i < w.size(); ++i) {
                             dx[i] += g * w[i];
                           }
                         });
}

void check_label(double label) {
  if (label != 1.0 && label != -1.0) {
    throw ContractError("label must be -1 or +1, got " + std::to_string(label));
  }
}

double sigmoid(double t) {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double logistic_loss(double logit, double label) {
  check_label(label);
  const double m = label * logit;
  // log(1 + e^{-m}) = max(-m, 0) + log1p(e^{-|m|})
  return std::max(-m, 0.0) + std::log1p(std::exp(-std::abs(m)));
}

double exponential_loss(double logit, double label) {
  check_label(label);
  return std::exp(-label * logit);
}

namespace {

template <typename Loss, typename Slope>
Var mean_loss(Var logits, std::span<const double> labels, Loss loss, Slope slope) {
  const Tensor& fv = logits.value();
  if (fv.size() != labels.size() || labels.empty()) {
    throw DimensionError("loss: " + std::to_string(labels.size()) + " labels for logits " +
                         fv.shape_string());
  }
  for (double y : labels) {
    check_label(y);
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < fv.size(); ++i) {
    acc += loss(fv[i], labels[i]);
  }
  const double inv_n = 1.0 / static_cast<double>(fv.size());
  const std::size_t fi = logits.id();
  return logits.tape().record(
      Tensor::scalar(acc * inv_n), {fi},
      [fi, inv_n, slope, y = std::vector<double>(labels.begin(), labels.end())](
          Tape& t, std::size_t self) {
        const double g = t.node_grad(self)[0] * inv_n;
        const Tensor& fv = t.node_value(fi);
        auto df = t.grad_buffer(fi);
        for (std::size_t i = 0; i < y.size(); ++i) {
          df[i] += g * slope(fv[i], y[i]);
        }
      });
}

}  // namespace

Var logistic_loss_mean(Var logits, std::span<const double> labels) {
  return mean_loss(logits, labels, logistic_loss,
                   [](double f, double y) { return -y * sigmoid(-y * f); });
}

Var exponential_loss_mean(Var logits, std::span<const double> labels) {
  return mean_loss(logits, labels, exponential_loss,
                   [](double f, double y) { return -y * std::exp(-y * f); });
}

Gradient finite_diff_gradient(const std::function<double(const ParamVector&)>& f,
                              const ParamVector& p, double h) {
  if (!(h > 0.0)) {
    throw ContractError("finite_diff_gradient: step must be positive");
  }
  const std::vector<double> base = p.flatten();
  std::vector<double> out(base.size());
  ParamVector probe = p;
  std::vector<double> shifted = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    shifted[i] = base[i] + h;
    probe.unflatten(shifted);
    const double up = f(probe);
    shifted[i] = base[i] - h;
    probe.unflatten(shifted);
    const double down = f(probe);
    shifted[i] = base[i];
    out[i] = (up - down) / (2.0 * h);
  }
  Gradient g = p.zeros_like();
  g.unflatten(out);
  return g;
}

}  // namespace samlab::diff
