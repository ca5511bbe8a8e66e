// samlab: run, sweep, emit figure tables, verify.
//
// Relative output paths are resolved against $SAMLAB_OUT when it is set.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "samlab/config.hpp"
#include "samlab/csv.hpp"
#include "samlab/errors.hpp"
#include "samlab/figures.hpp"
#include "samlab/runner.hpp"
#include "samlab/verify.hpp"

namespace fs = std::filesystem;
using namespace samlab;

namespace {

fs::path output_root(const fs::path& p) {
  if (p.is_absolute()) {
    return p;
  }
  if (const char* root = std::getenv("SAMLAB_OUT"); root && *root) {
    return fs::path(root) / p;
  }
  return p;
}

config::ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& sets,
                                     const std::string& out) {
  config::ExperimentConfig cfg = path.empty() ? config::ExperimentConfig{} : config::load(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ContractError("--set expects key=value, got '" + kv + "'");
    }
    config::set_value(cfg, runner::resolve_key(kv.substr(0, eq)), kv.substr(eq + 1));
  }
  if (!out.empty()) {
    cfg.out_dir = out;
  }
  cfg.out_dir = output_root(cfg.out_dir);
  return cfg;
}

void print_metrics(const runner::RunManifest& m) {
  std::cout << m.dir.string() << ": train_error=" << m.metrics.train_error
            << " easy_probe_error=" << m.metrics.easy_probe_error
            << " hard_probe_error=" << m.metrics.hard_probe_error
            << " mean_ratio=" << m.metrics.mean_ratio
            << " mean_phantom_ratio=" << m.metrics.mean_phantom_ratio
            << " wall=" << m.wall_time_s << "s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SAM / last-layer SAM feature-learning lab on the two-feature toy task"};
  app.require_subcommand(1);

  std::string config_path, out;
  std::vector<std::string> sets;

  auto* run_cmd = app.add_subcommand("run", "train one configuration and write its run directory");
  run_cmd->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  run_cmd->add_option("--set", sets, "override a config field, key=value (repeatable)");
  run_cmd->add_option("--out", out, "run directory (overrides out_dir)");

  std::vector<std::string> axes;
  std::string seeds_text = "0";
  std::size_t workers = 1;
  bool resume = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "Cartesian sweep over config fields and seeds");
  sweep_cmd->add_option("--config", config_path, "base config file")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--set", sets, "override a base config field, key=value (repeatable)");
  sweep_cmd->add_option("--axis", axes, "axis as key=v1,v2,... (repeatable)");
  sweep_cmd->add_option("--seeds", seeds_text, "comma-separated seeds")->capture_default_str();
  sweep_cmd->add_option("--workers", workers, "concurrent runs")->capture_default_str();
  sweep_cmd->add_option("--out", out, "sweep directory (overrides out_dir)");
  sweep_cmd->add_flag("--resume", resume, "reuse finished cells with an identical config");

  std::vector<std::string> figures_wanted;
  std::string in_dir, fig_out;
  auto* emit_cmd = app.add_subcommand("emit", "write plot-ready figure tables from run directories");
  emit_cmd->add_option("--figure", figures_wanted, "fig2a, fig2b, fig3, fig4, fig5, fig6, fig7 or all")
      ->required();
  emit_cmd->add_option("--in", in_dir, "directory searched recursively for manifests")->required();
  emit_cmd->add_option("--out", fig_out, "output directory")->required();

  std::string scratch = "verify_scratch";
  auto* verify_cmd = app.add_subcommand("verify", "run the invariant and closed-form suite");
  verify_cmd->add_option("--scratch", scratch, "directory for the end-to-end runs")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      const auto cfg = load_config(config_path, sets, out);
      print_metrics(runner::run(cfg));
      return 0;
    }
    if (*sweep_cmd) {
      const auto base = load_config(config_path, sets, out);
      std::vector<runner::SweepAxis> parsed;
      for (const auto& a : axes) {
        parsed.push_back(runner::parse_axis(a));
      }
      std::vector<std::uint64_t> seeds;
      for (const auto& s : csv::split(seeds_text)) {
        seeds.push_back(static_cast<std::uint64_t>(csv::parse_int(s)));
      }
      const auto result = runner::sweep(base, parsed, seeds, {workers, resume});
      for (const auto& cell : result.cells) {
        if (cell.manifest) {
          print_metrics(*cell.manifest);
        } else {
          std::cout << cell.dir.string() << ": FAILED " << cell.error << '\n';
        }
      }
      std::cout << "aggregate: " << result.aggregate_csv.string() << '\n';
      return result.failures() == 0 ? 0 : 2;
    }
    if (*emit_cmd) {
      const auto manifests = runner::load_manifests(output_root(in_dir));
      if (figures_wanted.size() == 1 && figures_wanted[0] == "all") {
        figures_wanted = figures::figure_names();
      }
      for (const auto& f : figures_wanted) {
        std::cout << figures::emit_figure_data(manifests, f, output_root(fig_out)).string() << '\n';
      }
      return 0;
    }
    if (*verify_cmd) {
      bool ok = true;
      for (const auto& r : verify::run_suite(output_root(scratch).string())) {
        verify::print(r, std::cout);
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
