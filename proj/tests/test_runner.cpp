#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "samlab/config.hpp"
#include "samlab/csv.hpp"
#include "samlab/errors.hpp"
#include "samlab/figures.hpp"
#include "samlab/runner.hpp"

using namespace samlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "samlab_test_runner" / name;
  fs::remove_all(p);
  return p;
}

config::ExperimentConfig tiny(const fs::path& dir) {
  config::ExperimentConfig cfg;
  cfg.train.steps = 60;
  cfg.data.n = 40;
  cfg.probe_n = 200;
  cfg.analysis_every = 20;
  cfg.record_every = 5;
  cfg.out_dir = dir;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config text round trip") {
  config::ExperimentConfig cfg;
  cfg.train.mode = optim::Mode::intervene_lr;
  cfg.train.v_star = std::array<double, 2>{1.0, 0.6610000000000001};
  cfg.train.rho = 0.05;
  cfg.train.loss = model::LossKind::exponential;
  cfg.data.noise.label_flip_p = 0.05;
  cfg.data.noise.target = data::NoiseTarget::hard_only;
  cfg.set_seed(7);
  cfg.epochs = 250;
  cfg.analyses = {config::Analysis::ratios, config::Analysis::bins};
  cfg.out_dir = "somewhere/else";
  std::stringstream ss;
  config::write(cfg, ss);
  const auto back = config::parse(ss);
  CHECK(config::to_map(back) == config::to_map(cfg));
  CHECK(back.train.v_star == cfg.train.v_star);
  CHECK(back.seed() == 7);
  CHECK(back.data.seed == 7);
}

TEST_CASE("config parse errors") {
  std::stringstream dup("train.lr = 0.1\ntrain.lr = 0.2\n");
  CHECK_THROWS_AS(config::parse(dup), ContractError);
  std::stringstream unknown("train.momentum = 0.9\n");
  CHECK_THROWS_AS(config::parse(unknown), ContractError);
  std::stringstream bad_number("train.lr = fast\n");
  CHECK_THROWS(config::parse(bad_number));
  std::stringstream comments("# a comment\n\ntrain.lr = 0.5  # trailing\n");
  CHECK(config::parse(comments).train.lr == 0.5);
}

TEST_CASE("v* ratio shorthand and epochs") {
  config::ExperimentConfig cfg;
  config::set_value(cfg, "train.v_star_ratio", "2.5");
  REQUIRE(cfg.train.v_star);
  CHECK((*cfg.train.v_star)[0] == 1.0);
  CHECK((*cfg.train.v_star)[1] == 2.5);
  cfg.epochs = 250;
  cfg.train.batch_size = 20;
  CHECK(cfg.effective_steps() == 3750);
  cfg.train.batch_size = 7;
  CHECK(cfg.effective_steps() == (250 * 300 + 6) / 7);
}

TEST_CASE("config validation") {
  config::ExperimentConfig cfg;
  cfg.record_every = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = {};
  cfg.train.mode = optim::Mode::intervene_iw;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("axis names and parsing") {
  CHECK(runner::resolve_key("rho") == "train.rho");
  CHECK(runner::resolve_key("train.batch_size") == "train.batch_size");
  CHECK(runner::resolve_key("complexity_deg") == "data.complexity_deg");
  CHECK_THROWS_AS(runner::resolve_key("nonsense"), ContractError);
  const auto axis = runner::parse_axis("rho=0,0.1,0.2");
  CHECK(axis.key == "train.rho");
  CHECK(axis.values == std::vector<std::string>{"0", "0.1", "0.2"});
  CHECK_THROWS_AS(runner::parse_axis("rho"), ContractError);
}

TEST_CASE("mean and sample standard deviation") {
  const auto a = runner::mean_std({0.25, 0.25, 0.25});
  CHECK(a.mean == 0.25);
  CHECK(a.std == 0.0);
  const auto b = runner::mean_std({1.0, 2.0, 3.0});
  CHECK(b.mean == 2.0);
  CHECK(b.std == 1.0);
  CHECK(std::isnan(runner::mean_std({4.0}).std));
}

TEST_CASE("run writes artifacts and a reproducible manifest") {
  const fs::path dir = scratch("single");
  auto cfg = tiny(dir);
  cfg.train.mode = optim::Mode::lsam;
  cfg.train.rho = 0.3;
  cfg.analyses = {config::Analysis::ratios, config::Analysis::lorenz, config::Analysis::bins,
                  config::Analysis::decomp, config::Analysis::theory};
  const auto m = runner::run(cfg);
  for (const char* f : {"manifest.json", "config.txt", "steps.csv", "ratios.csv", "lorenz.csv",
                        "gini.csv", "importance.csv", "bins.csv", "decomp.csv", "theory.csv",
                        "final.ckpt"}) {
    CHECK(fs::exists(dir / f));
  }
  CHECK(m.metrics.steps == 60);
  const auto loaded = runner::load_manifest(dir / "manifest.json");
  CHECK(loaded.metrics == m.metrics);
  CHECK(loaded.artifacts == m.artifacts);
  CHECK(loaded.config == m.config);
  // Re-running the stored config reproduces the metrics and every artifact.
  auto again = loaded.experiment();
  again.out_dir = scratch("single_again");
  const auto m2 = runner::run(again);
  CHECK(m2.metrics == m.metrics);
  // config.txt records out_dir; every other artifact is byte-identical.
  for (const auto& [name, hash] : m.artifacts) {
    if (name != "config.txt") {
      CHECK(m2.artifacts.at(name) == hash);
    }
  }
  CHECK(runner::parse_manifest(runner::manifest_json(m)).metrics == m.metrics);
}

TEST_CASE("sgd and sam at rho zero give identical metrics") {
  auto cfg = tiny(scratch("sgd"));
  cfg.analyses = {config::Analysis::ratios};
  const auto a = runner::run(cfg);
  cfg.train.mode = optim::Mode::sam;
  cfg.out_dir = scratch("sam0");
  const auto b = runner::run(cfg);
  CHECK(a.metrics == b.metrics);
}

TEST_CASE("a failed run leaves no manifest") {
  const fs::path dir = scratch("blocked");
  fs::create_directories(dir);
  auto cfg = tiny(dir);
  cfg.analyses = {config::Analysis::ratios};
  // A directory where a CSV should go makes the write fail.
  fs::create_directories(dir / "steps.csv");
  CHECK_THROWS(runner::run(cfg));
  CHECK_FALSE(fs::exists(dir / "manifest.json"));
}

TEST_CASE("sweep cell counts and aggregation") {
  auto cfg = tiny(scratch("sweep_empty"));
  const auto one = runner::sweep(cfg, {}, {0, 1});
  CHECK(one.cells.size() == 2);
  CHECK(one.failures() == 0);

  cfg.out_dir = scratch("sweep_grid");
  const auto grid = runner::sweep(cfg, {runner::parse_axis("train.lr=0.01,0.02")}, {0, 1},
                                  {2, false});
  REQUIRE(grid.cells.size() == 4);
  CHECK(grid.manifests().size() == 4);
  std::ifstream in(grid.aggregate_csv);
  std::string header, row1, row2, extra;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  CHECK_FALSE(static_cast<bool>(std::getline(in, extra)));
  const auto cols = csv::split(header);
  CHECK(cols.front() == "train.lr");
  CHECK(std::find(cols.begin(), cols.end(), "hard_probe_error_std") != cols.end());
  // Workers do not change results.
  cfg.out_dir = scratch("sweep_serial");
  const auto serial = runner::sweep(cfg, {runner::parse_axis("train.lr=0.01,0.02")}, {0, 1});
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(serial.cells[i].manifest->metrics == grid.cells[i].manifest->metrics);
  }
}

TEST_CASE("sweep records failing cells and continues") {
  auto cfg = tiny(scratch("sweep_fail"));
  const auto r = runner::sweep(cfg, {runner::parse_axis("train.lr=0.01,-1")}, {0});
  REQUIRE(r.cells.size() == 2);
  CHECK(r.failures() == 1);
  CHECK(r.cells[0].manifest.has_value());
  CHECK_FALSE(r.cells[1].error.empty());
}

TEST_CASE("identical runs aggregate to their own value") {
  auto cfg = tiny(scratch("sweep_same"));
  const auto r = runner::sweep(cfg, {runner::parse_axis("train.batch_size=5")}, {3});
  const auto agg = slurp(r.aggregate_csv);
  CHECK(agg.find(csv::format_double(r.cells[0].manifest->metrics.hard_probe_error)) !=
        std::string::npos);
}

TEST_CASE("figure schemas") {
  CHECK(figures::schema("fig2a") ==
        std::vector<std::string>{"complexity_deg", "rho", "seed", "hard_probe_err"});
  CHECK(figures::schema("fig5") ==
        std::vector<std::string>{"intervention", "v_star_ratio", "seed", "hard_probe_err"});
  CHECK(figures::figure_names().size() == 7);
  CHECK_THROWS_AS(figures::schema("fig9"), ContractError);
}

TEST_CASE("figures need their analyses") {
  auto cfg = tiny(scratch("fig_plain"));
  cfg.train.mode = optim::Mode::lsam;
  cfg.train.rho = 0.2;
  const auto m = runner::run(cfg);
  const fs::path out = scratch("fig_plain_out");
  CHECK(fs::exists(figures::emit_figure_data({m}, "fig2a", out)));
  CHECK_THROWS_AS(figures::emit_figure_data({m}, "fig3", out), MissingAnalysisError);
  CHECK_THROWS_AS(figures::emit_figure_data({m}, "fig2b", out), MissingAnalysisError);
  CHECK_THROWS_AS(figures::emit_figure_data({m}, "fig4", out), MissingAnalysisError);
}

TEST_CASE("fig3 rows reproduce the run's lorenz points") {
  auto cfg = tiny(scratch("fig3"));
  cfg.train.mode = optim::Mode::lsam;
  cfg.train.rho = 0.2;
  cfg.analyses = {config::Analysis::lorenz};
  const auto m = runner::run(cfg);
  const fs::path path = figures::emit_figure_data({m}, "fig3", scratch("fig3_out"));
  std::ifstream fig(path), src(m.dir / "lorenz.csv");
  std::string a, b;
  std::getline(fig, a);
  CHECK(csv::split(a) == figures::schema("fig3"));
  std::getline(src, b);
  std::size_t rows = 0;
  while (std::getline(src, b)) {
    REQUIRE(std::getline(fig, a));
    CHECK(a == "lsam," + csv::format_double(0.2) + ",0," + b);
    ++rows;
  }
  CHECK_FALSE(static_cast<bool>(std::getline(fig, a)));
  CHECK(rows > 0);
}

TEST_CASE("fig5 places interventions at their v* ratio") {
  auto cfg = tiny(scratch("fig5_iw"));
  cfg.train.mode = optim::Mode::intervene_iw;
  config::set_value(cfg, "train.v_star_ratio", "2");
  const auto m = runner::run(cfg);
  const fs::path path = figures::emit_figure_data({m}, "fig5", scratch("fig5_out"));
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  const auto f = csv::split(row);
  CHECK(f.at(0) == "iw");
  CHECK(csv::parse_double(f.at(1)) == 2.0);
}
