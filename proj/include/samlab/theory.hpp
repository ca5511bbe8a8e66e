#pragma once

// Closed forms for the squared norm of the logit gradient of simple
// networks, and the first-order prediction of the phantom/real importance
// ratio under the exponential loss.

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "samlab/autodiff.hpp"
#include "samlab/model.hpp"

namespace samlab::analysis {

enum class NetKind { lsam, two_layer_linear, deep_linear, relu_mlp };
std::string to_string(NetKind k);
NetKind net_kind_from_string(const std::string& s);

/// f(x) = v^T act(W_1 act(W_2 ... act(W_{L-1} x))), with act the identity for
/// the linear kinds and ReLU for relu_mlp. weights[0] is W_1 (the layer
/// nearest the output). For lsam, f = v . phi with phi fixed and weights
/// empty.
struct NetworkDescription {
  NetKind kind = NetKind::lsam;
  std::vector<double> v;
  std::vector<diff::Tensor> weights;
  std::vector<double> phi;  // lsam only

  std::size_t depth() const noexcept { return weights.size() + 1; }  // L
};

struct TheoryResult {
  double squared_norm = 0.0;
  /// a_j for j = 1..L (a_1 = 1 belongs to the v gradient).
  std::vector<double> coefficients;
  /// |sigma_j(x)|^2 for j = 1..L, sigma_L(x) = x.
  std::vector<double> layer_norms;
  /// Active sets 1{sigma_j(x) > 0} for j = 1..L-1 (relu_mlp only).
  std::vector<std::vector<bool>> masks;
};

/// |grad f|^2 over (v, W_1, ..., W_{L-1}) as sum_j a_j |sigma_j(x)|^2 with
///   a_1 = 1,  a_j = |A_{j-1} W_{j-2}^T A_{j-2} ... W_1^T A_1 v|^2  (j >= 2),
/// A_i the ReLU masks (identity for the linear kinds).
TheoryResult theory_feature_grad_norm(const NetworkDescription& net, std::span<const double> x);

/// f evaluated directly from the description.
double network_logit(const NetworkDescription& net, std::span<const double> x);

/// Parameters (v, W_1, ..., W_{L-1}) as a ParamVector, and back.
diff::ParamVector network_params(const NetworkDescription& net);
NetworkDescription with_params(const NetworkDescription& net, const diff::ParamVector& p);

/// Central-difference |grad f|^2 over the same parameters.
double numeric_feature_grad_norm(const NetworkDescription& net, std::span<const double> x,
                                 double h);
/// Step used by numeric_feature_grad_norm callers: f is affine in each
/// single parameter for every kind (away from ReLU kinks), so the step
/// only trades rounding against the chance of crossing a kink.
double default_fd_step(NetKind kind);

struct TaylorRow {
  double rho = 0.0;
  double measured = 0.0;   // log(lambda~ / lambda) = -y (f(w~) - f(w))
  double predicted = 0.0;  // rho |grad_w f|
};

/// Builds the logit on a tape from the registered parameters.
using LogitFn = std::function<diff::Var(diff::Tape&, const std::vector<diff::Var>&)>;

/// Single-example exponential loss, full-parameter phantom
/// w~ = w + rho grad L / |grad L|.
std::vector<TaylorRow> taylor_ratio_check(const LogitFn& logit, const diff::ParamVector& w,
                                          double y, std::span<const double> rhos);

/// The same check on the toy model, with the phantom built by the SAM
/// ascent step.
std::vector<TaylorRow> taylor_ratio_check(const model::ModelState& m,
                                          const std::array<double, 4>& x, double y,
                                          std::span<const double> rhos);

}  // namespace samlab::analysis
