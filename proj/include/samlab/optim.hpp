#pragma once

// Training rules for the toy model: SGD, SAM, last-layer SAM (LSAM) and the
// three fixed-ratio interventions, plus the minibatch training loop.

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "samlab/model.hpp"
#include "samlab/toydata.hpp"

namespace samlab::optim {

using model::LossKind;
using model::ModelState;

enum class Mode { sgd, sam, lsam, intervene_iw, intervene_lr, intervene_combined };
std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

enum class PhantomMode { full, last_layer };

enum class Intervention { iw, lr, combined };
std::string to_string(Intervention i);

/// Below this ascent-gradient norm the phantom equals the base state.
inline constexpr double kDegenerateGradNorm = 1e-30;

/// The ascent-perturbed parameters at which SAM evaluates its descent step.
struct PhantomState {
  ModelState base;
  ModelState perturbed;
  double rho = 0.0;
  PhantomMode mode = PhantomMode::full;
  double ascent_grad_norm = 0.0;
  double base_loss = 0.0;     // batch loss at base
  bool degenerate = false;    // rho > 0 but the ascent gradient vanished
};

struct TrainConfig {
  Mode mode = Mode::sgd;
  double rho = 0.0;
  /// (v*_easy, v*_hard); required by the intervention modes.
  std::optional<std::array<double, 2>> v_star;
  double lr = 0.01;
  std::size_t batch_size = 5;
  std::size_t steps = 15000;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::logistic;
  /// Intervention modes only: keep v at its initial value.
  bool freeze_v = false;

  void validate() const;
  bool is_intervention() const noexcept {
    return mode == Mode::intervene_iw || mode == Mode::intervene_lr ||
           mode == Mode::intervene_combined;
  }
};

/// Mean per-example loss over the batch.
double batch_loss(const ModelState& m, std::span<const data::ToySample> batch, LossKind loss);

/// Gradient of the batch loss over all parameters (theta segments, then v).
diff::Gradient loss_gradient(const ModelState& m, std::span<const data::ToySample> batch,
                             LossKind loss);

/// w - lr * grad over every parameter.
ModelState apply_update(const ModelState& m, const diff::Gradient& grad, double lr);

ModelState sgd_step(const ModelState& m, std::span<const data::ToySample> batch,
                    const TrainConfig& cfg);

/// w + rho * g / |g| over all parameters.
PhantomState sam_phantom(const ModelState& m, std::span<const data::ToySample> batch, double rho,
                         LossKind loss = LossKind::logistic);

/// v + rho * g_v / |g_v|; theta is carried over bit-exact.
PhantomState lsam_phantom(const ModelState& m, std::span<const data::ToySample> batch,
                          double rho, LossKind loss = LossKind::logistic);

/// Descent at m using the full gradient evaluated at the phantom (SAM or
/// LSAM per cfg.mode).
ModelState sam_step(const ModelState& m, std::span<const data::ToySample> batch,
                    const TrainConfig& cfg);

/// Batch-mean theta gradient with the fixed ratio v* substituted into the
/// importance weight (iw), the feature-gradient weights (lr) or both
/// (combined). Logistic loss.
diff::Gradient intervention_gradient(const ModelState& m, std::span<const data::ToySample> batch,
                                     std::array<double, 2> v_star, Intervention which);

/// |v*| carrying the current signs of v, so a head that learned a negated
/// feature is steered with the matching orientation. train() applies this
/// to cfg.v_star at every step.
std::array<double, 2> oriented_v_star(std::array<double, 2> v_star, const ModelState& m);

/// Per-step diagnostics. Quantities describe the state before the update.
struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;      // batch loss at the real parameters
  double error01 = 0.0;   // batch 0-1 error at the real parameters
  double v_easy = 0.0;
  double v_hard = 0.0;
  double vt_easy = 0.0;   // phantom v (equal to v without a phantom)
  double vt_hard = 0.0;
  double grad_norm = 0.0;         // norm of the applied descent gradient
  double ascent_grad_norm = 0.0;  // zero for rules without a phantom
  bool degenerate = false;
  double gini_real = std::numeric_limits<double>::quiet_NaN();
  double gini_phantom = std::numeric_limits<double>::quiet_NaN();
};

/// Everything an observer can see about one step, before the update.
struct StepContext {
  std::size_t step;
  std::span<const data::ToySample> batch;
  const ModelState& state;
  const PhantomState* phantom;  // null for sgd and interventions
  StepRecord& record;
};
using StepObserver = std::function<void(StepContext&)>;

struct TrainResult {
  ModelState state;
  std::vector<StepRecord> records;
};

/// cfg.steps minibatch updates with per-epoch shuffling. The initial state is
/// init(cfg.seed) unless `initial` is given.
TrainResult train(const TrainConfig& cfg, const data::ToyDataset& data,
                  const StepObserver& observer = {},
                  const std::optional<ModelState>& initial = std::nullopt);

/// Sample order of epoch `epoch`: a permutation of [0, n).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t epoch, std::size_t n);

}  // namespace samlab::optim
