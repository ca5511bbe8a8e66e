#pragma once

// Experiment configuration and its flat text form: one `key = value` per
// line, '#' starts a comment, dotted keys address nested fields
// (train.lr, data.complexity_deg, data.noise.sigma, ...).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "samlab/optim.hpp"
#include "samlab/toydata.hpp"

namespace samlab::config {

enum class Analysis { decomp, lorenz, ratios, bins, theory };
std::string to_string(Analysis a);
Analysis analysis_from_string(const std::string& s);

struct ExperimentConfig {
  optim::TrainConfig train;
  data::ToySpec data;
  /// When nonzero, train.steps is derived as ceil(epochs * n / batch_size).
  std::size_t epochs = 0;
  std::size_t probe_n = data::kDefaultProbeSize;
  std::size_t record_every = 10;
  /// Analysis checkpoints: step 0, every analysis_every steps, and the end.
  std::size_t analysis_every = 2500;
  /// Radius of the phantom used by the lorenz/bins analyses; negative means
  /// "use train.rho". Lets SGD runs be inspected at a LSAM-sized phantom.
  double analysis_rho = -1.0;
  std::set<Analysis> analyses;
  std::filesystem::path out_dir = "runs/run";

  /// One seed drives data, initialization and shuffling.
  std::uint64_t seed() const noexcept { return train.seed; }
  void set_seed(std::uint64_t s) noexcept {
    train.seed = s;
    data.seed = s;
  }
  bool has(Analysis a) const { return analyses.count(a) != 0; }
  double effective_analysis_rho() const { return analysis_rho < 0.0 ? train.rho : analysis_rho; }
  std::size_t effective_steps() const;

  void validate() const;
};

/// Every key understood by set_value, in canonical order.
const std::vector<std::string>& known_keys();
bool is_known_key(const std::string& key);

/// Assigns one field from its text form; throws ContractError on an
/// unknown key or a malformed value.
void set_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
/// Text form of one field, as set_value would accept it.
std::string get_value(const ExperimentConfig& cfg, const std::string& key);

/// All keys with their values, canonical order.
std::map<std::string, std::string> to_map(const ExperimentConfig& cfg);
ExperimentConfig from_map(const std::map<std::string, std::string>& kv);

ExperimentConfig parse(std::istream& in);
ExperimentConfig load(const std::filesystem::path& path);
void write(const ExperimentConfig& cfg, std::ostream& out);
void save(const ExperimentConfig& cfg, const std::filesystem::path& path);

}  // namespace samlab::config
