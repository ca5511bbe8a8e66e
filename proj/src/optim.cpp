#include "samlab/optim.hpp"

#include <cmath>
#include <numeric>

#include "samlab/errors.hpp"
#include "samlab/rng.hpp"

namespace samlab::optim {

using diff::Gradient;
using diff::ParamVector;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using model::Graph;
using model::Trainable;

std::string to_string(Mode m) {
  switch (m) {
    case Mode::sgd:
      return "sgd";
    case Mode::sam:
      return "sam";
    case Mode::lsam:
      return "lsam";
    case Mode::intervene_iw:
      return "intervene-iw";
    case Mode::intervene_lr:
      return "intervene-lr";
    case Mode::intervene_combined:
      return "intervene-combined";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  for (Mode m : {Mode::sgd, Mode::sam, Mode::lsam, Mode::intervene_iw, Mode::intervene_lr,
                 Mode::intervene_combined}) {
    if (to_string(m) == s) {
      return m;
    }
  }
  throw ContractError("unknown training mode '" + s + "'");
}

std::string to_string(Intervention i) {
  switch (i) {
    case Intervention::iw:
      return "iw";
    case Intervention::lr:
      return "lr";
    case Intervention::combined:
      return "combined";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) {
    throw ContractError("learning rate must be positive");
  }
  if (batch_size < 1) {
    throw ContractError("batch size must be at least 1");
  }
  if (!(rho >= 0.0)) {
    throw ContractError("rho must be nonnegative");
  }
  if (is_intervention() && !v_star) {
    throw ContractError("mode " + to_string(mode) + " requires v_star");
  }
  if (is_intervention() && loss != LossKind::logistic) {
    throw ContractError("interventions are defined for the logistic loss");
  }
}

namespace {

struct Evaluation {
  Gradient grad;
  double loss = 0.0;
  std::vector<double> logits;
};

Var loss_node(const Graph& g, const std::vector<double>& labels, LossKind loss) {
  return loss == LossKind::logistic ? diff::logistic_loss_mean(g.logits, labels)
                                    : diff::exponential_loss_mean(g.logits, labels);
}

Evaluation evaluate(const ModelState& m, std::span<const data::ToySample> batch, LossKind loss,
                    Trainable trainable) {
  Tape tape;
  const Graph g = model::build_graph(tape, m, batch, trainable);
  const Var l = loss_node(g, model::labels_of(batch), loss);
  Evaluation e;
  e.grad = tape.backward(l);
  e.loss = l.value().item();
  const auto f = g.logits.value().data();
  e.logits.assign(f.begin(), f.end());
  return e;
}

double error01(const std::vector<double>& logits, std::span<const data::ToySample> batch) {
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double s = logits[i] > 0 ? 1.0 : (logits[i] < 0 ? -1.0 : 0.0);
    wrong += s != batch[i].y;
  }
  return static_cast<double>(wrong) / static_cast<double>(batch.size());
}

/// base + rho * g / |g|; base itself when rho == 0 or g vanishes.
ParamVector ascend(const ParamVector& base, const Gradient& g, double rho, double& norm,
                   bool& degenerate) {
  norm = g.global_norm();
  degenerate = false;
  ParamVector out = base;
  if (rho == 0.0) {
    return out;
  }
  if (!(norm >= kDegenerateGradNorm)) {
    degenerate = true;
    return out;
  }
  out.axpy(rho / norm, g);
  return out;
}

void check_rho(double rho) {
  if (!(rho >= 0.0)) {
    throw ContractError("rho must be nonnegative");
  }
}

PhantomState full_phantom(const ModelState& m, const Evaluation& at_base, double rho) {
  PhantomState ps{m, m, rho, PhantomMode::full, 0.0, at_base.loss, false};
  ps.perturbed = ModelState::from_params(
      ascend(m.all_params(), at_base.grad, rho, ps.ascent_grad_norm, ps.degenerate));
  return ps;
}

PhantomState last_layer_phantom(const ModelState& m, const Evaluation& at_base, double rho) {
  PhantomState ps{m, m, rho, PhantomMode::last_layer, 0.0, at_base.loss, false};
  ParamVector v;
  v.add("v", Tensor::vector({m.v_easy, m.v_hard}));
  const ParamVector vt = ascend(v, at_base.grad, rho, ps.ascent_grad_norm, ps.degenerate);
  ps.perturbed.v_easy = vt.tensor(0)[0];
  ps.perturbed.v_hard = vt.tensor(0)[1];
  return ps;
}

}  // namespace

double batch_loss(const ModelState& m, std::span<const data::ToySample> batch, LossKind loss) {
  Tape tape;
  const Graph g = model::build_graph(tape, m, batch, Trainable::none);
  return loss_node(g, model::labels_of(batch), loss).value().item();
}

Gradient loss_gradient(const ModelState& m, std::span<const data::ToySample> batch,
                       LossKind loss) {
  return evaluate(m, batch, loss, Trainable::all).grad;
}

ModelState apply_update(const ModelState& m, const Gradient& grad, double lr) {
  ParamVector all = m.all_params();
  all.axpy(-lr, grad);
  return ModelState::from_params(all);
}

ModelState sgd_step(const ModelState& m, std::span<const data::ToySample> batch,
                    const TrainConfig& cfg) {
  return apply_update(m, loss_gradient(m, batch, cfg.loss), cfg.lr);
}

PhantomState sam_phantom(const ModelState& m, std::span<const data::ToySample> batch, double rho,
                         LossKind loss) {
  check_rho(rho);
  return full_phantom(m, evaluate(m, batch, loss, Trainable::all), rho);
}

PhantomState lsam_phantom(const ModelState& m, std::span<const data::ToySample> batch,
                          double rho, LossKind loss) {
  check_rho(rho);
  return last_layer_phantom(m, evaluate(m, batch, loss, Trainable::v_only), rho);
}

ModelState sam_step(const ModelState& m, std::span<const data::ToySample> batch,
                    const TrainConfig& cfg) {
  if (cfg.mode != Mode::sam && cfg.mode != Mode::lsam) {
    throw ContractError("sam_step needs mode sam or lsam");
  }
  const PhantomState ps = cfg.mode == Mode::sam ? sam_phantom(m, batch, cfg.rho, cfg.loss)
                                                : lsam_phantom(m, batch, cfg.rho, cfg.loss);
  return apply_update(m, loss_gradient(ps.perturbed, batch, cfg.loss), cfg.lr);
}

std::array<double, 2> oriented_v_star(std::array<double, 2> v_star, const ModelState& m) {
  const auto orient = [](double star, double v) { return v < 0.0 ? -std::abs(star) : std::abs(star); };
  return {orient(v_star[0], m.v_easy), orient(v_star[1], m.v_hard)};
}

Gradient intervention_gradient(const ModelState& m, std::span<const data::ToySample> batch,
                               std::array<double, 2> v_star, Intervention which) {
  Tape tape;
  const Graph g = model::build_graph(tape, m, batch, Trainable::theta_only);
  const auto phi_e = g.phi_easy.value().data();
  const auto phi_h = g.phi_hard.value().data();
  const bool star_weight = which != Intervention::lr;
  const bool star_grad = which != Intervention::iw;
  const double a_e = star_weight ? v_star[0] : m.v_easy;
  const double a_h = star_weight ? v_star[1] : m.v_hard;
  const double b_e = star_grad ? v_star[0] : m.v_easy;
  const double b_h = star_grad ? v_star[1] : m.v_hard;
  // Same operation order as the logistic-loss backward sweep, so v* == v
  // reproduces the standard gradient bit for bit.
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<double> w_e(batch.size()), w_h(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double y = batch[i].y;
    diff::check_label(y);
    const double f = phi_e[i] * a_e + phi_h[i] * a_h;
    const double c = inv_b * (-y * diff::sigmoid(-y * f));
    w_e[i] = c * b_e;
    w_h[i] = c * b_h;
  }
  const Var s = diff::add(diff::weighted_sum(g.phi_easy, w_e), diff::weighted_sum(g.phi_hard, w_h));
  return tape.backward(s);
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_stream(seed, "shuffle", epoch);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

TrainResult train(const TrainConfig& cfg, const data::ToyDataset& data,
                  const StepObserver& observer, const std::optional<ModelState>& initial) {
  cfg.validate();
  if (data.empty()) {
    throw ContractError("cannot train on an empty dataset");
  }
  TrainResult result{initial ? *initial : model::init(cfg.seed), {}};
  result.records.reserve(cfg.steps);
  ModelState& m = result.state;

  const std::size_t n = data.size();
  std::uint64_t epoch = 0;
  std::vector<std::size_t> order = epoch_order(cfg.seed, epoch, n);
  std::size_t cursor = 0;
  std::vector<data::ToySample> batch;
  batch.reserve(cfg.batch_size);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (cursor >= n) {
      order = epoch_order(cfg.seed, ++epoch, n);
      cursor = 0;
    }
    batch.clear();
    for (; cursor < n && batch.size() < cfg.batch_size; ++cursor) {
      batch.push_back(data.samples[order[cursor]]);
    }

    StepRecord rec;
    rec.step = step;
    rec.v_easy = m.v_easy;
    rec.v_hard = m.v_hard;
    rec.vt_easy = m.v_easy;
    rec.vt_hard = m.v_hard;

    Gradient descent;
    std::optional<PhantomState> phantom;
    if (cfg.mode == Mode::sgd) {
      Evaluation e = evaluate(m, batch, cfg.loss, Trainable::all);
      rec.loss = e.loss;
      rec.error01 = error01(e.logits, batch);
      descent = std::move(e.grad);
    } else if (cfg.mode == Mode::sam || cfg.mode == Mode::lsam) {
      const bool full = cfg.mode == Mode::sam;
      const Evaluation e =
          evaluate(m, batch, cfg.loss, full ? Trainable::all : Trainable::v_only);
      rec.loss = e.loss;
      rec.error01 = error01(e.logits, batch);
      phantom = full ? full_phantom(m, e, cfg.rho) : last_layer_phantom(m, e, cfg.rho);
      rec.vt_easy = phantom->perturbed.v_easy;
      rec.vt_hard = phantom->perturbed.v_hard;
      rec.ascent_grad_norm = phantom->ascent_grad_norm;
      rec.degenerate = phantom->degenerate;
      descent = loss_gradient(phantom->perturbed, batch, cfg.loss);
    } else {
      const Intervention which = cfg.mode == Mode::intervene_iw   ? Intervention::iw
                                 : cfg.mode == Mode::intervene_lr ? Intervention::lr
                                                                  : Intervention::combined;
      Evaluation e = evaluate(m, batch, cfg.loss, Trainable::v_only);
      rec.loss = e.loss;
      rec.error01 = error01(e.logits, batch);
      descent = intervention_gradient(m, batch, oriented_v_star(*cfg.v_star, m), which);
      if (cfg.freeze_v) {
        descent.add("v", Tensor::vector({0.0, 0.0}));
      } else {
        descent.add("v", e.grad.tensor(0));
      }
    }
    rec.grad_norm = descent.global_norm();

    if (observer) {
      StepContext ctx{step, batch, m, phantom ? &*phantom : nullptr, rec};
      observer(ctx);
    }
    m = apply_update(m, descent, cfg.lr);
    result.records.push_back(rec);
  }
  return result;
}

}  // namespace samlab::optim
