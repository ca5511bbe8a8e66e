#include "samlab/figures.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "samlab/csv.hpp"
#include "samlab/errors.hpp"

namespace samlab::figures {

namespace fs = std::filesystem;
using runner::RunManifest;

namespace {

const std::map<std::string, std::vector<std::string>>& schemas() {
  static const std::map<std::string, std::vector<std::string>> s{
      {"fig2a", {"complexity_deg", "rho", "seed", "hard_probe_err"}},
      {"fig2b", {"complexity_deg", "rho", "seed", "mean_ratio", "mean_phantom_ratio"}},
      {"fig3", {"mode", "rho", "seed", "step", "source", "k_frac", "cum_frac"}},
      {"fig4", {"mode", "rho", "seed", "step", "source", "bin_x", "bin_y", "x_lo", "x_hi", "y_lo",
                "y_hi", "median_lambda", "count"}},
      {"fig5", {"intervention", "v_star_ratio", "seed", "hard_probe_err"}},
      {"fig6", {"noise_kind", "noise_target", "rho", "seed", "hard_probe_err"}},
      {"fig7", {"batch_size", "rho", "seed", "hard_probe_err"}},
  };
  return s;
}

std::string cfg(const RunManifest& m, const std::string& key) {
  const auto it = m.config.find(key);
  if (it == m.config.end()) {
    throw ContractError("manifest in " + m.dir.string() + " lacks config key " + key);
  }
  return it->second;
}

std::string mode_of(const RunManifest& m) { return cfg(m, "train.mode"); }
bool is_rho_run(const RunManifest& m) {
  const std::string mode = mode_of(m);
  return mode == "sgd" || mode == "lsam";
}
std::string rho_of(const RunManifest& m) {
  return mode_of(m) == "sgd" ? "0" : cfg(m, "train.rho");
}

void require(const RunManifest& m, const std::string& figure, const std::string& analysis) {
  if (!m.has_analysis(analysis)) {
    throw MissingAnalysisError(figure, analysis);
  }
}

std::string noise_kind(const RunManifest& m) {
  const bool g = csv::parse_double(cfg(m, "data.noise.sigma")) > 0.0;
  const bool f = csv::parse_double(cfg(m, "data.noise.flip_p")) > 0.0;
  const bool d = csv::parse_double(cfg(m, "data.noise.dropout_q")) > 0.0;
  const int count = int(g) + int(f) + int(d);
  if (count == 0) return "none";
  if (count > 1) return "mixed";
  return g ? "gaussian" : f ? "label_flip" : "dropout";
}

/// Data rows of a run's CSV artifact, split into fields, header checked.
std::vector<std::vector<std::string>> read_rows(const RunManifest& m, const std::string& file,
                                                const std::vector<std::string>& header) {
  const fs::path path = m.dir / file;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || csv::split(line) != header) {
    throw ContractError("unexpected header in " + path.string());
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      rows.push_back(csv::split(line));
    }
  }
  return rows;
}

using RowSink = std::function<void(const std::vector<std::string>&)>;

void rows_for(const std::string& figure, const RunManifest& m, const RowSink& emit) {
  const auto& metrics = m.metrics;
  const std::string seed = std::to_string(m.seed);
  if (figure == "fig2a") {
    if (is_rho_run(m)) {
      emit({cfg(m, "data.complexity_deg"), rho_of(m), seed,
            csv::format_double(metrics.hard_probe_error)});
    }
  } else if (figure == "fig2b") {
    if (is_rho_run(m)) {
      require(m, figure, "ratios");
      emit({cfg(m, "data.complexity_deg"), rho_of(m), seed, csv::format_double(metrics.mean_ratio),
            csv::format_double(metrics.mean_phantom_ratio)});
    }
  } else if (figure == "fig3") {
    require(m, figure, "lorenz");
    for (const auto& r : read_rows(m, "lorenz.csv", {"step", "source", "k_frac", "cum_frac"})) {
      emit({mode_of(m), rho_of(m), seed, r.at(0), r.at(1), r.at(2), r.at(3)});
    }
  } else if (figure == "fig4") {
    require(m, figure, "bins");
    for (const auto& r : read_rows(m, "bins.csv",
                                   {"step", "source", "bin_x", "bin_y", "x_lo", "x_hi", "y_lo",
                                    "y_hi", "median_lambda", "count"})) {
      std::vector<std::string> row{mode_of(m), rho_of(m), seed};
      row.insert(row.end(), r.begin(), r.end());
      emit(row);
    }
  } else if (figure == "fig5") {
    const std::string mode = mode_of(m);
    const std::string err = csv::format_double(metrics.hard_probe_error);
    if (mode.starts_with("intervene-")) {
      const auto v_star = csv::split(cfg(m, "train.v_star"));
      if (v_star.size() != 2) {
        throw ContractError("intervention run in " + m.dir.string() + " lacks train.v_star");
      }
      const double ratio = csv::parse_double(v_star[1]) / csv::parse_double(v_star[0]);
      emit({mode.substr(10), csv::format_double(ratio), seed, err});
    } else if (mode == "lsam") {
      require(m, figure, "ratios");
      emit({"lsam", csv::format_double(metrics.mean_phantom_ratio), seed, err});
    } else if (mode == "sgd") {
      require(m, figure, "ratios");
      emit({"sgd", csv::format_double(metrics.mean_ratio), seed, err});
    }
  } else if (figure == "fig6") {
    if (is_rho_run(m)) {
      emit({noise_kind(m), cfg(m, "data.noise.target"), rho_of(m), seed,
            csv::format_double(metrics.hard_probe_error)});
    }
  } else if (figure == "fig7") {
    if (is_rho_run(m)) {
      emit({cfg(m, "train.batch_size"), rho_of(m), seed,
            csv::format_double(metrics.hard_probe_error)});
    }
  }
}

}  // namespace

const std::vector<std::string>& figure_names() {
  static const std::vector<std::string> names{"fig2a", "fig2b", "fig3", "fig4",
                                              "fig5",  "fig6",  "fig7"};
  return names;
}

std::vector<std::string> schema(const std::string& figure) {
  const auto it = schemas().find(figure);
  if (it == schemas().end()) {
    throw ContractError("unknown figure '" + figure + "'");
  }
  return it->second;
}

fs::path emit_figure_data(const std::vector<RunManifest>& manifests, const std::string& figure,
                          const fs::path& out_dir) {
  const auto header = schema(figure);
  std::vector<std::vector<std::string>> rows;
  for (const auto& m : manifests) {
    rows_for(figure, m, [&](const std::vector<std::string>& r) { rows.push_back(r); });
  }
  if (rows.empty()) {
    throw ContractError("no run contributes to " + figure);
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw IoError("cannot create " + out_dir.string());
  }
  const fs::path path = out_dir / (figure + ".csv");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot create " + path.string());
  }
  out << csv::join(header) << '\n';
  for (const auto& r : rows) {
    out << csv::join(r) << '\n';
  }
  out.close();
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
  return path;
}

}  // namespace samlab::figures
