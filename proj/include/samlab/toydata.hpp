#pragma once

// The 4-D toy distribution: an easy linear feature in x[0..1] and a hard
// spiral feature in x[2..3], each carrying its own binary attribute.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "samlab/rng.hpp"

namespace samlab::data {

using Vec2 = std::array<double, 2>;

enum class NoiseTarget { both, hard_only };

std::string to_string(NoiseTarget t);
NoiseTarget noise_target_from_string(const std::string& s);

struct NoiseSpec {
  double gaussian_sigma = 0.0;  // std of additive per-coordinate Gaussian
  double label_flip_p = 0.0;    // probability the feature's sign is flipped
  double dropout_q = 0.0;       // probability the feature is zeroed
  NoiseTarget target = NoiseTarget::both;

  bool enabled() const noexcept {
    return gaussian_sigma > 0.0 || label_flip_p > 0.0 || dropout_q > 0.0;
  }
  void validate() const;
  friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

struct ToySpec {
  double complexity_deg = 360.0;
  double a_easy = 2.0;
  double a_hard = 0.25;
  std::size_t n = 300;
  NoiseSpec noise{};
  std::uint64_t seed = 0;

  void validate() const;
  /// Largest spiral latent magnitude, 2*pi*chi/360.
  double spiral_radius() const;
  friend bool operator==(const ToySpec&, const ToySpec&) = default;
};

struct ToySample {
  std::array<double, 4> x{};
  double y = 1.0;
  double a1 = 1.0;  // easy attribute
  double a2 = 1.0;  // hard attribute

  Vec2 easy() const { return {x[0], x[1]}; }
  Vec2 hard() const { return {x[2], x[3]}; }
  friend bool operator==(const ToySample&, const ToySample&) = default;
};

struct ToyDataset {
  ToySpec spec;
  bool probe = false;  // attributes drawn independently
  std::vector<ToySample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  friend bool operator==(const ToyDataset&, const ToyDataset&) = default;
};

/// a_easy * [z, z].
Vec2 easy_from_latent(double z, double a_easy);
/// a_hard * [-z cos z, z sin z] + eta.
Vec2 hard_from_latent(double z, double a_hard, Vec2 eta);

/// z ~ U(0,1) for label +1, U(-1,0) for label -1.
Vec2 sample_easy(double label, double a_easy, Rng& rng);

/// z^2 ~ U(0, R^2) with R = 2*pi*chi/360, z = +-sqrt by label, plus an
/// offset eta ~ U([0, 0.5]^2).
Vec2 sample_hard(double label, double complexity_deg, double a_hard, Rng& rng);

/// eps + u * m * feature, with eps i.i.d. Gaussian per coordinate, u = -1
/// with probability p and m = 0 with probability q.
Vec2 apply_noise(Vec2 feature, const NoiseSpec& spec, Rng& rng);

/// Training distribution: a1 = a2 = y for every sample.
ToyDataset generate(const ToySpec& spec);

/// Probe distribution: a1 and a2 drawn independently and uniformly; x_easy
/// follows a1 and x_hard follows a2. y is set to a1.
ToyDataset generate_probe_set(const ToySpec& spec, std::size_t n_probe);

inline constexpr std::size_t kDefaultProbeSize = 2000;

/// CSV with header x1,x2,x3,x4,y,a1,a2 and 17 significant digits.
void write_csv(const ToyDataset& data, std::ostream& out);
void save_csv(const ToyDataset& data, const std::filesystem::path& path);
/// Reads samples only; spec fields are left default.
ToyDataset read_csv(std::istream& in);
ToyDataset load_csv(const std::filesystem::path& path);

}  // namespace samlab::data
