#include "samlab/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "samlab/errors.hpp"
#include "samlab/hash.hpp"
#include "samlab/rng.hpp"

namespace samlab::model {

using diff::ParamVector;
using diff::Tape;
using diff::Tensor;
using diff::Var;

std::string to_string(LossKind k) { return k == LossKind::logistic ? "logistic" : "exponential"; }

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "logistic") {
    return LossKind::logistic;
  }
  if (s == "exponential") {
    return LossKind::exponential;
  }
  throw ContractError("loss must be 'logistic' or 'exponential', got '" + s + "'");
}

std::string to_string(Feature f) { return f == Feature::easy ? "easy" : "hard"; }

std::vector<std::pair<std::string, std::vector<std::size_t>>> theta_layout() {
  return {
      {"l1.weight", {kHidden, kInputDim}}, {"l1.bias", {kHidden}},
      {"ln1.gain", {kHidden}},             {"ln1.bias", {kHidden}},
      {"l2.weight", {kHidden, kHidden}},   {"l2.bias", {kHidden}},
      {"ln2.gain", {kHidden}},             {"ln2.bias", {kHidden}},
      {"l3.weight", {1, kHidden}},         {"l3.bias", {1}},
  };
}

std::string architecture_hash() {
  std::ostringstream desc;
  desc << "masked-pair;eps=" << kLayerNormEps;
  for (const auto& [name, shape] : theta_layout()) {
    desc << ';' << name;
    for (std::size_t d : shape) {
      desc << ':' << d;
    }
  }
  desc << ";v:2";
  return sha256_hex(desc.str()).substr(0, 16);
}

void check_architecture(const ParamVector& theta) {
  const auto layout = theta_layout();
  if (theta.segment_count() != layout.size()) {
    throw ContractError("theta has " + std::to_string(theta.segment_count()) +
                        " segments, architecture needs " + std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& seg = theta.segment(i);
    if (seg.name != layout[i].first || seg.value.shape() != layout[i].second) {
      throw ContractError("theta segment " + std::to_string(i) + " is " + seg.name +
                          seg.value.shape_string() + ", expected " + layout[i].first);
    }
  }
}

ParamVector ModelState::all_params() const {
  ParamVector all = theta;
  all.add("v", Tensor::vector({v_easy, v_hard}));
  return all;
}

ModelState ModelState::from_params(const ParamVector& all) {
  if (all.segment_count() == 0 || all.segments().back().name != "v" ||
      all.segments().back().value.size() != 2) {
    throw ContractError("parameter vector must end with a 2-entry 'v' segment");
  }
  ModelState m;
  std::vector<ParamVector::Segment> segs(all.segments().begin(), all.segments().end() - 1);
  m.theta = ParamVector(std::move(segs));
  const Tensor& v = all.segments().back().value;
  m.v_easy = v[0];
  m.v_hard = v[1];
  return m;
}

ModelState init(std::uint64_t seed) {
  Rng rng = make_stream(seed, "init");
  ModelState m;
  for (const auto& [name, shape] : theta_layout()) {
    Tensor t(shape, 0.0);
    if (name.ends_with(".weight")) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(shape[1]));
      for (double& w : t.data()) {
        w = uniform(rng, -bound, bound);
      }
    } else if (name.ends_with(".gain")) {
      for (double& g : t.data()) {
        g = 1.0;
      }
    }
    m.theta.add(name, std::move(t));
  }
  const double bound = 1.0 / std::sqrt(2.0);
  m.v_easy = uniform(rng, -bound, bound);
  m.v_hard = uniform(rng, -bound, bound);
  return m;
}

Var representation(const std::vector<Var>& theta, Var input) {
  if (theta.size() != 10) {
    throw ContractError("representation needs the 10 theta segments");
  }
  Var h = affine(input, theta[0], theta[1]);
  h = relu(layer_norm(h, theta[2], theta[3], kLayerNormEps));
  h = affine(h, theta[4], theta[5]);
  h = relu(layer_norm(h, theta[6], theta[7], kLayerNormEps));
  return affine(h, theta[8], theta[9]);
}

Graph build_graph(Tape& tape, const ModelState& m, std::span<const data::ToySample> batch,
                  Trainable trainable) {
  if (batch.empty()) {
    throw ContractError("empty batch");
  }
  const std::size_t b = batch.size();
  Tensor input({2 * b, kInputDim}, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    const auto& x = batch[i].x;
    // easy copy keeps x[0..1], hard copy keeps x[2..3]; the rest are exact zeros
    input.at(i, 0) = x[0];
    input.at(i, 1) = x[1];
    input.at(b + i, 2) = x[2];
    input.at(b + i, 3) = x[3];
  }
  Graph g;
  const bool theta_grad = trainable == Trainable::all || trainable == Trainable::theta_only;
  const bool v_grad = trainable == Trainable::all || trainable == Trainable::v_only;
  g.theta = theta_grad ? tape.parameters(m.theta) : tape.constants(m.theta);
  const Tensor v = Tensor::vector({m.v_easy, m.v_hard});
  g.v = v_grad ? tape.parameter("v", v) : tape.constant(v);
  Var phi = representation(g.theta, tape.constant(std::move(input)));
  g.phi_easy = slice_rows(phi, 0, b);
  g.phi_hard = slice_rows(phi, b, b);
  g.logits = add(scale(g.phi_easy, element(g.v, 0)), scale(g.phi_hard, element(g.v, 1)));
  return g;
}

BatchFeatures batch_features(const ModelState& m, std::span<const data::ToySample> batch) {
  Tape tape;
  const Graph g = build_graph(tape, m, batch, Trainable::none);
  const auto e = g.phi_easy.value().data();
  const auto h = g.phi_hard.value().data();
  return {std::vector<double>(e.begin(), e.end()), std::vector<double>(h.begin(), h.end())};
}

FeaturePair features(const ModelState& m, const std::array<double, 4>& x) {
  const data::ToySample s{x, 1.0, 1.0, 1.0};
  const BatchFeatures f = batch_features(m, std::span(&s, 1));
  return {f.phi_easy[0], f.phi_hard[0]};
}

double logit(const ModelState& m, const std::array<double, 4>& x) {
  const FeaturePair f = features(m, x);
  return m.v_easy * f.phi_easy + m.v_hard * f.phi_hard;
}

std::vector<double> labels_of(std::span<const data::ToySample> batch) {
  std::vector<double> y;
  y.reserve(batch.size());
  for (const auto& s : batch) {
    y.push_back(s.y);
  }
  return y;
}

namespace {

double sign(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

}  // namespace

double probe_error_toy(const ModelState& m, const data::ToyDataset& data, Feature which) {
  if (data.empty()) {
    throw ContractError("probe error of an empty dataset");
  }
  const BatchFeatures f = batch_features(m, data.samples);
  const double orient = sign(which == Feature::easy ? m.v_easy : m.v_hard);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double phi = which == Feature::easy ? f.phi_easy[i] : f.phi_hard[i];
    const double attr = which == Feature::easy ? data.samples[i].a1 : data.samples[i].a2;
    if (sign(orient * phi) != attr) {
      ++wrong;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

double train_error(const ModelState& m, std::span<const data::ToySample> samples) {
  if (samples.empty()) {
    throw ContractError("train error of an empty dataset");
  }
  const BatchFeatures f = batch_features(m, samples);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double logit = m.v_easy * f.phi_easy[i] + m.v_hard * f.phi_hard[i];
    if (sign(logit) != samples[i].y) {
      ++wrong;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(samples.size());
}

namespace {

constexpr const char* kCheckpointMagic = "samlab-checkpoint";
constexpr int kCheckpointVersion = 1;

std::string hex_bits(double v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(v)));
  return buf;
}

double from_hex_bits(const std::string& s) {
  if (s.size() != 16) {
    throw ContractError("checkpoint value must be 16 hex digits: '" + s + "'");
  }
  std::size_t used = 0;
  const unsigned long long bits = std::stoull(s, &used, 16);
  if (used != 16) {
    throw ContractError("bad hex value in checkpoint: '" + s + "'");
  }
  return std::bit_cast<double>(static_cast<std::uint64_t>(bits));
}

}  // namespace

void write_checkpoint(const ModelState& m, std::uint64_t seed, std::ostream& out) {
  check_architecture(m.theta);
  const ParamVector all = m.all_params();
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "arch " << architecture_hash() << '\n';
  out << "seed " << seed << '\n';
  out << "segments " << all.segment_count() << '\n';
  for (const auto& seg : all.segments()) {
    out << seg.name << ' ' << seg.value.rank();
    for (std::size_t d : seg.value.shape()) {
      out << ' ' << d;
    }
    for (double v : seg.value.data()) {
      out << ' ' << hex_bits(v);
    }
    out << '\n';
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != kCheckpointMagic || version != kCheckpointVersion) {
    throw ContractError("not a samlab checkpoint (version " + std::to_string(kCheckpointVersion) +
                        ")");
  }
  std::string arch;
  if (!(in >> word >> arch) || word != "arch") {
    throw ContractError("checkpoint missing architecture hash");
  }
  if (arch != architecture_hash()) {
    throw ContractError("checkpoint architecture " + arch + " does not match " +
                        architecture_hash());
  }
  Checkpoint cp;
  std::size_t count = 0;
  if (!(in >> word >> cp.seed) || word != "seed" || !(in >> word >> count) ||
      word != "segments") {
    throw ContractError("malformed checkpoint header");
  }
  ParamVector all;
  for (std::size_t s = 0; s < count; ++s) {
    std::string name;
    std::size_t rank = 0;
    if (!(in >> name >> rank) || rank > 2) {
      throw ContractError("malformed checkpoint record");
    }
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      in >> d;
      n *= d;
    }
    std::vector<double> values(n);
    for (auto& v : values) {
      std::string hex;
      if (!(in >> hex)) {
        throw ContractError("truncated checkpoint record '" + name + "'");
      }
      v = from_hex_bits(hex);
    }
    all.add(name, Tensor(std::move(shape), std::move(values)));
  }
  cp.state = ModelState::from_params(all);
  check_architecture(cp.state.theta);
  return cp;
}

void save_checkpoint(const ModelState& m, std::uint64_t seed, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  write_checkpoint(m, seed, out);
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return read_checkpoint(in);
}

}  // namespace samlab::model
