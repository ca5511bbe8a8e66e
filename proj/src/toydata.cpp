#include "samlab/toydata.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "samlab/csv.hpp"
#include "samlab/errors.hpp"

namespace samlab::data {

std::string to_string(NoiseTarget t) { return t == NoiseTarget::both ? "both" : "hard-only"; }

NoiseTarget noise_target_from_string(const std::string& s) {
  if (s == "both") {
    return NoiseTarget::both;
  }
  if (s == "hard-only" || s == "hard_only") {
    return NoiseTarget::hard_only;
  }
  throw ContractError("noise target must be 'both' or 'hard-only', got '" + s + "'");
}

void NoiseSpec::validate() const {
  if (!(gaussian_sigma >= 0.0)) {
    throw ContractError("noise sigma must be >= 0");
  }
  if (!(label_flip_p >= 0.0 && label_flip_p <= 0.5)) {
    throw ContractError("label flip probability must lie in [0, 0.5]");
  }
  if (!(dropout_q >= 0.0 && dropout_q <= 1.0)) {
    throw ContractError("dropout probability must lie in [0, 1]");
  }
}

void ToySpec::validate() const {
  if (!(complexity_deg > 0.0)) {
    throw ContractError("complexity must be positive");
  }
  if (!(a_easy > 0.0 && a_hard > 0.0)) {
    throw ContractError("feature scales must be positive");
  }
  if (n < 1) {
    throw ContractError("dataset needs at least one sample");
  }
  noise.validate();
}

double ToySpec::spiral_radius() const { return 2.0 * std::numbers::pi * complexity_deg / 360.0; }

Vec2 easy_from_latent(double z, double a_easy) { return {a_easy * z, a_easy * z}; }

Vec2 hard_from_latent(double z, double a_hard, Vec2 eta) {
  return {a_hard * (-z * std::cos(z)) + eta[0], a_hard * (z * std::sin(z)) + eta[1]};
}

Vec2 sample_easy(double label, double a_easy, Rng& rng) {
  if (label != 1.0 && label != -1.0) {
    throw ContractError("label must be -1 or +1");
  }
  const double u = uniform01(rng);
  // U(0,1) for +1; U(-1,0) for -1 (mirror keeps the sign strict a.s.)
  const double z = label > 0 ? u : -u;
  return easy_from_latent(z, a_easy);
}

Vec2 sample_hard(double label, double complexity_deg, double a_hard, Rng& rng) {
  if (label != 1.0 && label != -1.0) {
    throw ContractError("label must be -1 or +1");
  }
  if (!(complexity_deg > 0.0)) {
    throw ContractError("complexity must be positive");
  }
  const double radius = 2.0 * std::numbers::pi * complexity_deg / 360.0;
  const double z_sq = uniform(rng, 0.0, radius * radius);
  const double z = label > 0 ? std::sqrt(z_sq) : -std::sqrt(z_sq);
  const Vec2 eta{uniform(rng, 0.0, 0.5), uniform(rng, 0.0, 0.5)};
  return hard_from_latent(z, a_hard, eta);
}

Vec2 apply_noise(Vec2 feature, const NoiseSpec& spec, Rng& rng) {
  Vec2 eps{0.0, 0.0};
  if (spec.gaussian_sigma > 0.0) {
    eps[0] = spec.gaussian_sigma * standard_normal(rng);
    eps[1] = spec.gaussian_sigma * standard_normal(rng);
  }
  double sign = 1.0;
  if (spec.label_flip_p > 0.0 && bernoulli(rng, spec.label_flip_p)) {
    sign = -1.0;
  }
  double keep = 1.0;
  if (spec.dropout_q > 0.0 && bernoulli(rng, spec.dropout_q)) {
    keep = 0.0;
  }
  return {eps[0] + sign * keep * feature[0], eps[1] + sign * keep * feature[1]};
}

namespace {

ToySample make_sample(double a1, double a2, const ToySpec& spec, Rng& rng) {
  Vec2 easy = sample_easy(a1, spec.a_easy, rng);
  Vec2 hard = sample_hard(a2, spec.complexity_deg, spec.a_hard, rng);
  if (spec.noise.enabled()) {
    if (spec.noise.target == NoiseTarget::both) {
      easy = apply_noise(easy, spec.noise, rng);
    }
    hard = apply_noise(hard, spec.noise, rng);
  }
  return ToySample{{easy[0], easy[1], hard[0], hard[1]}, a1, a1, a2};
}

double draw_sign(Rng& rng) { return bernoulli(rng, 0.5) ? 1.0 : -1.0; }

}  // namespace

ToyDataset generate(const ToySpec& spec) {
  spec.validate();
  Rng rng = make_stream(spec.seed, "data");
  ToyDataset out{spec, false, {}};
  out.samples.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double y = draw_sign(rng);
    out.samples.push_back(make_sample(y, y, spec, rng));
  }
  return out;
}

ToyDataset generate_probe_set(const ToySpec& spec, std::size_t n_probe) {
  spec.validate();
  if (n_probe < 1) {
    throw ContractError("probe set needs at least one sample");
  }
  Rng rng = make_stream(spec.seed, "probe");
  ToyDataset out{spec, true, {}};
  out.spec.n = n_probe;
  out.samples.reserve(n_probe);
  for (std::size_t i = 0; i < n_probe; ++i) {
    const double a1 = draw_sign(rng);
    const double a2 = draw_sign(rng);
    out.samples.push_back(make_sample(a1, a2, spec, rng));
  }
  return out;
}

void write_csv(const ToyDataset& data, std::ostream& out) {
  out << "x1,x2,x3,x4,y,a1,a2\n";
  for (const auto& s : data.samples) {
    out << csv::format_double(s.x[0]) << ',' << csv::format_double(s.x[1]) << ','
        << csv::format_double(s.x[2]) << ',' << csv::format_double(s.x[3]) << ','
        << csv::format_double(s.y) << ',' << csv::format_double(s.a1) << ','
        << csv::format_double(s.a2) << '\n';
  }
}

void save_csv(const ToyDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  write_csv(data, out);
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

ToyDataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ContractError("dataset CSV is empty");
  }
  if (csv::split(line) != std::vector<std::string>{"x1", "x2", "x3", "x4", "y", "a1", "a2"}) {
    throw ContractError("dataset CSV header must be x1,x2,x3,x4,y,a1,a2");
  }
  ToyDataset data;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    const auto f = csv::split(line);
    if (f.size() != 7) {
      throw ContractError("dataset CSV row needs 7 fields: " + line);
    }
    ToySample s;
    for (std::size_t k = 0; k < 4; ++k) {
      s.x[k] = csv::parse_double(f[k]);
    }
    s.y = csv::parse_double(f[4]);
    s.a1 = csv::parse_double(f[5]);
    s.a2 = csv::parse_double(f[6]);
    data.samples.push_back(s);
  }
  data.spec.n = data.samples.size();
  return data;
}

ToyDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return read_csv(in);
}

}  // namespace samlab::data
