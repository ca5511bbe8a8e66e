#pragma once

// Single runs, sweeps and run persistence. A run directory holds
//   config.txt     the flat config the run was launched with
//   steps.csv      StepRecords every record_every steps
//   ...            one CSV per requested analysis
//   manifest.json  written last; its presence marks a complete run

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "samlab/config.hpp"

namespace samlab::runner {

inline constexpr int kManifestFormatVersion = 1;

struct RunMetrics {
  double train_error = 0.0;
  double easy_probe_error = 0.0;
  double hard_probe_error = 0.0;
  double final_loss = 0.0;  // mean training loss at the final state
  double mean_ratio = 0.0;
  double mean_phantom_ratio = 0.0;
  std::size_t degenerate_steps = 0;
  std::size_t steps = 0;

  friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

struct RunManifest {
  int format_version = kManifestFormatVersion;
  std::map<std::string, std::string> config;  // config::to_map snapshot
  std::uint64_t seed = 0;
  std::string architecture;
  RunMetrics metrics;
  std::map<std::string, std::string> artifacts;  // file name -> sha256
  std::vector<std::string> analyses;
  double wall_time_s = 0.0;
  std::filesystem::path dir;  // where it was loaded from or written to; not serialized

  config::ExperimentConfig experiment() const { return config::from_map(config); }
  bool has_analysis(const std::string& name) const;
};

/// Trains, evaluates probes on a fresh noise-free probe set, runs the
/// requested analyses and writes everything into cfg.out_dir.
RunManifest run(const config::ExperimentConfig& cfg);

std::string manifest_json(const RunManifest& m);
RunManifest parse_manifest(const std::string& json);
void write_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

/// Every manifest.json below `root`, sorted by directory.
std::vector<RunManifest> load_manifests(const std::filesystem::path& root);

struct SweepAxis {
  std::string key;  // a config key, or an unambiguous suffix such as "rho"
  std::vector<std::string> values;
};

/// "rho=0,0.1,0.2" -> {train.rho, {0, 0.1, 0.2}}.
SweepAxis parse_axis(const std::string& spec);
/// Full config key for an axis name; throws ContractError if unknown or
/// ambiguous.
std::string resolve_key(const std::string& name);

struct SweepCell {
  std::vector<std::pair<std::string, std::string>> assignment;
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  std::optional<RunManifest> manifest;
  std::string error;  // non-empty when the cell failed
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::filesystem::path aggregate_csv;

  std::vector<RunManifest> manifests() const;
  std::size_t failures() const;
};

struct SweepOptions {
  std::size_t workers = 1;
  /// Skip cells whose directory already holds a manifest for the same config.
  bool resume = false;
};

/// Cartesian product of the axes times the seeds, each cell in its own
/// subdirectory of base.out_dir, then aggregate.csv with mean and sample
/// standard deviation per cell over seeds.
SweepResult sweep(const config::ExperimentConfig& base, const std::vector<SweepAxis>& axes,
                  const std::vector<std::uint64_t>& seeds, const SweepOptions& opts = {});

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // n-1 denominator; NaN for fewer than two values
  std::size_t n = 0;
};
MeanStd mean_std(const std::vector<double>& values);

/// Writes the aggregate table for already finished cells.
void write_aggregate(const std::vector<SweepAxis>& axes, const std::vector<SweepCell>& cells,
                     const std::filesystem::path& path);

}  // namespace samlab::runner
