#pragma once

// Reverse-mode differentiation over a recorded tape of tensor operations.
//
// A Tape owns every intermediate value. Leaves are either constants or
// named parameters; backward() returns the derivative of a scalar output
// with respect to each parameter, in registration order, as a Gradient
// congruent with the parameters it came from.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "samlab/tensor.hpp"

namespace samlab::diff {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(std::string name, Tensor value);
  /// Registers every segment of `params` in order; returns one Var each.
  std::vector<Var> parameters(const ParamVector& params);
  /// Registers every segment of `params` as constants.
  std::vector<Var> constants(const ParamVector& params);

  /// Reverse sweep from a single-element output. Gradients of earlier
  /// sweeps are discarded first, so a tape can be swept repeatedly from
  /// different outputs.
  Gradient backward(Var output);

  /// Gradient of the last backward() sweep with respect to any node; zeros
  /// when the node was not reached.
  Tensor grad(Var node) const;

  const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by the operation implementations.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
  /// Accumulates `delta` into the gradient buffer of `node` (if it needs one).
  void accumulate(std::size_t node, std::span<const double> delta);
  std::span<double> grad_buffer(std::size_t node);
  bool needs_grad(std::size_t node) const { return nodes_[node].needs_grad; }
  const Tensor& node_value(std::size_t node) const { return nodes_[node].value; }
  const std::vector<double>& node_grad(std::size_t node) const { return nodes_[node].grad; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;  // empty until reached by a sweep
    bool needs_grad = false;
    BackwardFn backward;
  };
  struct ParamSlot {
    std::string name;
    std::size_t node;
  };

  std::vector<Node> nodes_;
  std::vector<ParamSlot> params_;
};

/// out[r, j] = sum_k weight[j, k] * x[r, k] + bias[j]. `x` is [n_in] or
/// [rows x n_in].
Var affine(Var x, Var weight, Var bias);

/// Per-row normalization with biased variance, then gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double eps);

/// max(0, x); the subgradient at exactly 0 is 0.
Var relu(Var x);

/// Rows [begin, begin + count) of a matrix.
Var slice_rows(Var x, std::size_t begin, std::size_t count);

/// Element `index` of x as a scalar.
Var element(Var x, std::size_t index);

/// x * s for a single-element s.
Var scale(Var x, Var s);

Var add(Var a, Var b);

/// sum_k a[k] * b[k] as a scalar.
Var dot(Var a, Var b);

/// sum_k weights[k] * x[k] as a scalar, with constant weights.
Var weighted_sum(Var x, std::span<const double> weights);

/// Mean of logistic losses log(1 + exp(-y f)) over the entries of `logits`.
Var logistic_loss_mean(Var logits, std::span<const double> labels);

/// Mean of exponential losses exp(-y f) over the entries of `logits`.
Var exponential_loss_mean(Var logits, std::span<const double> labels);

// Plain scalar forms. Labels must be -1 or +1.
double logistic_loss(double logit, double label);
double exponential_loss(double logit, double label);
/// 1 / (1 + exp(-t)), evaluated without overflow.
double sigmoid(double t);
void check_label(double label);

// Plain (tape-free) forward evaluations, same semantics as the Var ops.
Tensor affine_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor layer_norm_forward(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

/// Central-difference estimate of the gradient of `f` at `p`, one
/// coordinate at a time.
Gradient finite_diff_gradient(const std::function<double(const ParamVector&)>& f,
                              const ParamVector& p, double h);

}  // namespace samlab::diff
