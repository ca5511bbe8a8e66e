#pragma once

// Disentangled toy classifier. One shared network Phi (4 -> 100 -> 100 -> 1
// with layer norm and ReLU) is applied to [x_easy, 0, 0] and [0, 0, x_hard];
// the two scalar outputs are combined by last-layer weights (v_easy, v_hard).

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "samlab/autodiff.hpp"
#include "samlab/toydata.hpp"

namespace samlab::model {

inline constexpr std::size_t kInputDim = 4;
inline constexpr std::size_t kHidden = 100;
inline constexpr double kLayerNormEps = 1e-5;

enum class LossKind { logistic, exponential };
std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

enum class Feature { easy, hard };
std::string to_string(Feature f);

struct ModelState {
  diff::ParamVector theta;
  double v_easy = 0.0;
  double v_hard = 0.0;

  /// theta segments followed by a "v" segment [v_easy, v_hard].
  diff::ParamVector all_params() const;
  static ModelState from_params(const diff::ParamVector& all);

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

/// Segment names and shapes of theta, in flattening order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> theta_layout();
/// Stable identifier of the architecture above.
std::string architecture_hash();
/// Throws ContractError unless theta matches theta_layout().
void check_architecture(const diff::ParamVector& theta);

/// Uniform(+-1/sqrt(fan_in)) affine weights, zero biases, unit layer-norm
/// gains; v entries drawn as for a fan-in-2 layer.
ModelState init(std::uint64_t seed);

struct FeaturePair {
  double phi_easy = 0.0;
  double phi_hard = 0.0;
};

FeaturePair features(const ModelState& m, const std::array<double, 4>& x);
double logit(const ModelState& m, const std::array<double, 4>& x);

/// Which leaves of the graph are differentiable.
enum class Trainable { all, theta_only, v_only, none };

/// Recorded forward pass over a batch. Row i of phi_easy / phi_hard / logits
/// belongs to batch[i].
struct Graph {
  std::vector<diff::Var> theta;
  diff::Var v;         // [2]
  diff::Var phi_easy;  // [B x 1]
  diff::Var phi_hard;  // [B x 1]
  diff::Var logits;    // [B x 1]
};

/// Phi applied row-wise to a [rows x 4] input.
diff::Var representation(const std::vector<diff::Var>& theta, diff::Var input);

Graph build_graph(diff::Tape& tape, const ModelState& m, std::span<const data::ToySample> batch,
                  Trainable trainable);

/// Forward-only phi values for a batch, [B] each.
struct BatchFeatures {
  std::vector<double> phi_easy;
  std::vector<double> phi_hard;
};
BatchFeatures batch_features(const ModelState& m, std::span<const data::ToySample> batch);

std::vector<double> labels_of(std::span<const data::ToySample> batch);

/// Fraction of samples whose sign(v_which) * phi_which disagrees with that
/// feature's attribute.
double probe_error_toy(const ModelState& m, const data::ToyDataset& data, Feature which);

/// 0-1 error of sign(f) against y.
double train_error(const ModelState& m, std::span<const data::ToySample> samples);

/// Text checkpoint: header with architecture hash and seed, then one record
/// per segment with each double written as 16 hex digits of its bit pattern.
void save_checkpoint(const ModelState& m, std::uint64_t seed, const std::filesystem::path& path);
struct Checkpoint {
  ModelState state;
  std::uint64_t seed = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const ModelState& m, std::uint64_t seed, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);

}  // namespace samlab::model
