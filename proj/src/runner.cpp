#include "samlab/runner.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "samlab/analysis.hpp"
#include "samlab/csv.hpp"
#include "samlab/errors.hpp"
#include "samlab/hash.hpp"
#include "samlab/theory.hpp"

namespace samlab::runner {

namespace fs = std::filesystem;
using config::Analysis;
using config::ExperimentConfig;
using csv::format_double;
using json = nlohmann::ordered_json;

namespace {

/// Row-at-a-time CSV writer that turns every stream failure into IoError.
class CsvFile {
 public:
  CsvFile(const fs::path& path, const std::vector<std::string>& header)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) {
      throw IoError("cannot create " + path.string());
    }
    row(header);
  }
  void row(const std::vector<std::string>& fields) { out_ << csv::join(fields) << '\n'; }
  void close() {
    out_.close();
    if (!out_) {
      throw IoError("write failed for " + path_.string());
    }
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

std::string str(std::size_t v) { return std::to_string(v); }

struct Snapshot {
  std::size_t step;
  model::ModelState state;
  std::vector<data::ToySample> batch;
};

optim::PhantomMode phantom_mode_for(const ExperimentConfig& cfg) {
  return cfg.train.mode == optim::Mode::sam ? optim::PhantomMode::full
                                             : optim::PhantomMode::last_layer;
}

/// The theta part of a full gradient (drops the trailing "v" segment).
diff::ParamVector theta_part(const diff::ParamVector& all) {
  diff::ParamVector out;
  for (const auto& seg : all.segments()) {
    if (seg.name != "v") {
      out.add(seg.name, seg.value);
    }
  }
  return out;
}

void write_steps(const fs::path& dir, const ExperimentConfig& cfg,
                 const std::vector<optim::StepRecord>& records) {
  CsvFile f(dir / "steps.csv",
            {"step", "loss", "error01", "v_easy", "v_hard", "vt_easy", "vt_hard", "grad_norm",
             "ascent_grad_norm", "degenerate", "gini_real", "gini_phantom"});
  for (const auto& r : records) {
    if (r.step % cfg.record_every != 0) {
      continue;
    }
    f.row({str(r.step), format_double(r.loss), format_double(r.error01), format_double(r.v_easy),
           format_double(r.v_hard), format_double(r.vt_easy), format_double(r.vt_hard),
           format_double(r.grad_norm), format_double(r.ascent_grad_norm), r.degenerate ? "1" : "0",
           format_double(r.gini_real), format_double(r.gini_phantom)});
  }
  f.close();
}

void write_ratios(const fs::path& dir, const ExperimentConfig& cfg,
                  const std::vector<optim::StepRecord>& records) {
  CsvFile f(dir / "ratios.csv",
            {"step", "real_ratio", "phantom_ratio", "easy_scale", "hard_scale"});
  for (const auto& p : analysis::ratio_trace(records)) {
    if (p.step % cfg.record_every != 0) {
      continue;
    }
    f.row({str(p.step), format_double(p.real_ratio), format_double(p.phantom_ratio),
           format_double(p.easy_scale), format_double(p.hard_scale)});
  }
  f.close();
}

void write_weight_analyses(const fs::path& dir, const ExperimentConfig& cfg,
                           const data::ToyDataset& data, const std::vector<Snapshot>& snaps) {
  const bool want_lorenz = cfg.has(Analysis::lorenz);
  const bool want_bins = cfg.has(Analysis::bins);
  std::optional<CsvFile> lorenz_csv, gini_csv, importance_csv, bins_csv;
  if (want_lorenz) {
    lorenz_csv.emplace(dir / "lorenz.csv",
                       std::vector<std::string>{"step", "source", "k_frac", "cum_frac"});
    gini_csv.emplace(dir / "gini.csv",
                     std::vector<std::string>{"step", "gini_real", "gini_phantom"});
  }
  if (want_bins) {
    importance_csv.emplace(dir / "importance.csv",
                           std::vector<std::string>{"step", "index", "contrib_easy", "contrib_hard",
                                                    "lambda", "lambda_phantom"});
    bins_csv.emplace(dir / "bins.csv",
                     std::vector<std::string>{"step", "source", "bin_x", "bin_y", "x_lo", "x_hi",
                                              "y_lo", "y_hi", "median_lambda", "count"});
  }
  const double rho = cfg.effective_analysis_rho();
  for (const auto& snap : snaps) {
    const auto pw = analysis::batched_phantom_weights(snap.state, data.samples,
                                                      cfg.train.batch_size, rho,
                                                      phantom_mode_for(cfg));
    const std::string step = str(snap.step);
    if (want_lorenz) {
      const auto real = analysis::lorenz(pw.lambda);
      const auto phantom = analysis::lorenz(pw.lambda_phantom);
      for (const auto& [source, curve] : {std::pair{"real", &real}, std::pair{"phantom", &phantom}}) {
        for (const auto& [k, share] : curve->points) {
          lorenz_csv->row({step, source, format_double(k), format_double(share)});
        }
      }
      gini_csv->row({step, format_double(real.gini), format_double(phantom.gini)});
    }
    if (want_bins) {
      std::vector<double> ratio(pw.lambda.size());
      for (std::size_t i = 0; i < ratio.size(); ++i) {
        ratio[i] = pw.lambda_phantom[i] / pw.lambda[i];
        importance_csv->row({step, str(i), format_double(pw.contrib_easy[i]),
                             format_double(pw.contrib_hard[i]), format_double(pw.lambda[i]),
                             format_double(pw.lambda_phantom[i])});
      }
      const std::vector<std::pair<const char*, const std::vector<double>*>> sources{
          {"real", &pw.lambda}, {"phantom", &pw.lambda_phantom}, {"ratio", &ratio}};
      for (const auto& [source, values] : sources) {
        const auto grid =
            analysis::binned_median_importance(pw.contrib_easy, pw.contrib_hard, *values);
        const double wx = (grid.x_range.second - grid.x_range.first) / static_cast<double>(grid.nx);
        const double wy = (grid.y_range.second - grid.y_range.first) / static_cast<double>(grid.ny);
        for (std::size_t ix = 0; ix < grid.nx; ++ix) {
          for (std::size_t iy = 0; iy < grid.ny; ++iy) {
            bins_csv->row({step, source, str(ix), str(iy),
                           format_double(grid.x_range.first + wx * static_cast<double>(ix)),
                           format_double(grid.x_range.first + wx * static_cast<double>(ix + 1)),
                           format_double(grid.y_range.first + wy * static_cast<double>(iy)),
                           format_double(grid.y_range.first + wy * static_cast<double>(iy + 1)),
                           format_double(grid.median_at(ix, iy)), str(grid.count_at(ix, iy))});
          }
        }
      }
    }
  }
  for (auto* f : {&lorenz_csv, &gini_csv, &importance_csv, &bins_csv}) {
    if (*f) {
      (*f)->close();
    }
  }
}

void write_decomp(const fs::path& dir, const ExperimentConfig& cfg,
                  const std::vector<Snapshot>& snaps) {
  CsvFile f(dir / "decomp.csv", {"step", "batch_size", "max_abs_err", "grad_norm"});
  for (const auto& snap : snaps) {
    const auto rec = analysis::decompose(snap.state, snap.batch, {true, cfg.train.loss});
    const auto rebuilt = analysis::reconstruct_theta_gradient(rec);
    const auto direct = theta_part(optim::loss_gradient(snap.state, snap.batch, cfg.train.loss));
    const auto a = rebuilt.flatten();
    const auto b = direct.flatten();
    double err = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      err = std::max(err, std::abs(a[i] - b[i]));
    }
    f.row({str(snap.step), str(snap.batch.size()), format_double(err),
           format_double(direct.global_norm())});
  }
  f.close();
}

void write_theory(const fs::path& dir, const data::ToyDataset& data,
                  const std::vector<Snapshot>& snaps) {
  CsvFile f(dir / "theory.csv", {"step", "index", "kind", "analytic", "numeric", "rel_err"});
  const std::size_t per_snapshot = std::min<std::size_t>(5, data.size());
  const double rhos[] = {1e-3};
  for (const auto& snap : snaps) {
    for (std::size_t i = 0; i < per_snapshot; ++i) {
      const auto& s = data.samples[i];
      // Last-layer closed form: |grad_v f|^2 = |phi|^2.
      const auto phi = model::features(snap.state, s.x);
      analysis::NetworkDescription net;
      net.kind = analysis::NetKind::lsam;
      net.v = {snap.state.v_easy, snap.state.v_hard};
      net.phi = {phi.phi_easy, phi.phi_hard};
      const double analytic = analysis::theory_feature_grad_norm(net, {}).squared_norm;
      const double numeric = analysis::numeric_feature_grad_norm(
          net, {}, analysis::default_fd_step(analysis::NetKind::lsam));
      f.row({str(snap.step), str(i), "lsam", format_double(analytic), format_double(numeric),
             format_double(std::abs(analytic - numeric) / std::max(std::abs(analytic), 1e-300))});
      // First-order prediction of log(lambda~/lambda) under the exponential loss.
      const auto row = analysis::taylor_ratio_check(snap.state, s.x, s.y, rhos).front();
      f.row({str(snap.step), str(i), "taylor", format_double(row.predicted),
             format_double(row.measured),
             format_double(std::abs(row.measured - row.predicted) /
                           std::max(std::abs(row.predicted), 1e-300))});
    }
  }
  f.close();
}

std::string cell_name(const std::vector<std::pair<std::string, std::string>>& assignment,
                      std::uint64_t seed) {
  std::string name;
  for (const auto& [key, value] : assignment) {
    name += key + "=" + value + "__";
  }
  name += "seed=" + std::to_string(seed);
  for (char& c : name) {
    if (c == '/' || c == '\\' || c == ' ' || c == ',') {
      c = '_';
    }
  }
  return name;
}

const std::vector<std::string>& aggregate_metrics() {
  static const std::vector<std::string> names{"train_error", "easy_probe_error",
                                              "hard_probe_error", "mean_ratio",
                                              "mean_phantom_ratio"};
  return names;
}

double metric(const RunMetrics& m, const std::string& name) {
  if (name == "train_error") return m.train_error;
  if (name == "easy_probe_error") return m.easy_probe_error;
  if (name == "hard_probe_error") return m.hard_probe_error;
  if (name == "mean_ratio") return m.mean_ratio;
  if (name == "mean_phantom_ratio") return m.mean_phantom_ratio;
  throw ContractError("unknown metric " + name);
}

}  // namespace

bool RunManifest::has_analysis(const std::string& name) const {
  return std::find(analyses.begin(), analyses.end(), name) != analyses.end();
}

RunManifest run(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  const fs::path dir = cfg.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  }
  // A manifest marks a complete run; drop any stale one before writing.
  fs::remove(dir / "manifest.json", ec);
  config::save(cfg, dir / "config.txt");

  const data::ToyDataset train_data = data::generate(cfg.data);
  data::ToySpec clean = cfg.data;
  clean.noise = {};
  const data::ToyDataset probe = data::generate_probe_set(clean, cfg.probe_n);

  optim::TrainConfig tc = cfg.train;
  tc.steps = cfg.effective_steps();

  const bool want_snapshots = cfg.has(Analysis::lorenz) || cfg.has(Analysis::bins) ||
                              cfg.has(Analysis::decomp) || cfg.has(Analysis::theory);
  std::vector<Snapshot> snaps;
  const analysis::DecompOptions quick{false, cfg.train.loss};
  auto observer = [&](optim::StepContext& ctx) {
    if (want_snapshots && ctx.step % cfg.analysis_every == 0) {
      snaps.push_back({ctx.step, ctx.state, {ctx.batch.begin(), ctx.batch.end()}});
    }
    if (cfg.has(Analysis::lorenz) && ctx.step % cfg.record_every == 0) {
      const auto real = analysis::decompose(ctx.state, ctx.batch, quick);
      ctx.record.gini_real = analysis::lorenz(real.lambda).gini;
      ctx.record.gini_phantom =
          ctx.phantom ? analysis::lorenz(analysis::decompose_phantom(*ctx.phantom, ctx.batch, quick)
                                             .lambda)
                            .gini
                      : ctx.record.gini_real;
    }
  };
  const optim::TrainResult result = optim::train(tc, train_data, observer);
  if (want_snapshots) {
    const std::size_t b = std::min(cfg.train.batch_size, train_data.size());
    snaps.push_back({tc.steps, result.state,
                     {train_data.samples.begin(), train_data.samples.begin() + static_cast<std::ptrdiff_t>(b)}});
  }

  RunManifest m;
  m.config = config::to_map(cfg);
  m.seed = cfg.seed();
  m.architecture = model::architecture_hash();
  m.dir = dir;
  m.metrics.steps = tc.steps;
  m.metrics.train_error = model::train_error(result.state, train_data.samples);
  m.metrics.final_loss = optim::batch_loss(result.state, train_data.samples, cfg.train.loss);
  m.metrics.easy_probe_error = model::probe_error_toy(result.state, probe, model::Feature::easy);
  m.metrics.hard_probe_error = model::probe_error_toy(result.state, probe, model::Feature::hard);
  const auto ratios = analysis::summarize_ratios(result.records);
  m.metrics.mean_ratio = ratios.mean_ratio;
  m.metrics.mean_phantom_ratio = ratios.mean_phantom_ratio;
  m.metrics.degenerate_steps = static_cast<std::size_t>(std::count_if(
      result.records.begin(), result.records.end(), [](const auto& r) { return r.degenerate; }));
  for (Analysis a : cfg.analyses) {
    m.analyses.push_back(config::to_string(a));
  }

  write_steps(dir, cfg, result.records);
  std::vector<std::string> files{"config.txt", "steps.csv"};
  if (cfg.has(Analysis::ratios)) {
    write_ratios(dir, cfg, result.records);
    files.push_back("ratios.csv");
  }
  if (cfg.has(Analysis::lorenz) || cfg.has(Analysis::bins)) {
    write_weight_analyses(dir, cfg, train_data, snaps);
    if (cfg.has(Analysis::lorenz)) {
      files.insert(files.end(), {"lorenz.csv", "gini.csv"});
    }
    if (cfg.has(Analysis::bins)) {
      files.insert(files.end(), {"importance.csv", "bins.csv"});
    }
  }
  if (cfg.has(Analysis::decomp)) {
    write_decomp(dir, cfg, snaps);
    files.push_back("decomp.csv");
  }
  if (cfg.has(Analysis::theory)) {
    write_theory(dir, train_data, snaps);
    files.push_back("theory.csv");
  }
  model::save_checkpoint(result.state, cfg.seed(), dir / "final.ckpt");
  files.push_back("final.ckpt");
  for (const auto& name : files) {
    m.artifacts[name] = sha256_file(dir / name);
  }
  m.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest(m, dir / "manifest.json");
  return m;
}

std::string manifest_json(const RunManifest& m) {
  json j;
  j["format_version"] = m.format_version;
  j["seed"] = m.seed;
  j["architecture"] = m.architecture;
  json cfg = json::object();
  for (const auto& [k, v] : m.config) {
    cfg[k] = v;
  }
  j["config"] = cfg;
  // Metrics as 17-digit strings so they survive the round trip bit for bit.
  json metrics = json::object();
  metrics["train_error"] = format_double(m.metrics.train_error);
  metrics["easy_probe_error"] = format_double(m.metrics.easy_probe_error);
  metrics["hard_probe_error"] = format_double(m.metrics.hard_probe_error);
  metrics["final_loss"] = format_double(m.metrics.final_loss);
  metrics["mean_ratio"] = format_double(m.metrics.mean_ratio);
  metrics["mean_phantom_ratio"] = format_double(m.metrics.mean_phantom_ratio);
  metrics["degenerate_steps"] = m.metrics.degenerate_steps;
  metrics["steps"] = m.metrics.steps;
  j["metrics"] = metrics;
  j["analyses"] = m.analyses;
  json artifacts = json::object();
  for (const auto& [k, v] : m.artifacts) {
    artifacts[k] = v;
  }
  j["artifacts"] = artifacts;
  j["wall_time_s"] = m.wall_time_s;
  return j.dump(2) + "\n";
}

RunManifest parse_manifest(const std::string& text) {
  RunManifest m;
  try {
    const json j = json::parse(text);
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kManifestFormatVersion) {
      throw ContractError("unsupported manifest format version " +
                          std::to_string(m.format_version));
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.architecture = j.at("architecture").get<std::string>();
    for (const auto& [k, v] : j.at("config").items()) {
      m.config[k] = v.get<std::string>();
    }
    const json& mj = j.at("metrics");
    auto num = [&](const char* key) { return csv::parse_double(mj.at(key).get<std::string>()); };
    m.metrics.train_error = num("train_error");
    m.metrics.easy_probe_error = num("easy_probe_error");
    m.metrics.hard_probe_error = num("hard_probe_error");
    m.metrics.final_loss = num("final_loss");
    m.metrics.mean_ratio = num("mean_ratio");
    m.metrics.mean_phantom_ratio = num("mean_phantom_ratio");
    m.metrics.degenerate_steps = mj.at("degenerate_steps").get<std::size_t>();
    m.metrics.steps = mj.at("steps").get<std::size_t>();
    m.analyses = j.at("analyses").get<std::vector<std::string>>();
    for (const auto& [k, v] : j.at("artifacts").items()) {
      m.artifacts[k] = v.get<std::string>();
    }
    m.wall_time_s = j.at("wall_time_s").get<double>();
  } catch (const json::exception& e) {
    throw ContractError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const RunManifest& m, const fs::path& path) {
  const fs::path tmp = fs::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot create " + tmp.string());
    }
    out << manifest_json(m);
    out.close();
    if (!out) {
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot move manifest into place: " + ec.message());
  }
}

RunManifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open manifest " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  RunManifest m = parse_manifest(ss.str());
  m.dir = path.parent_path();
  return m;
}

std::vector<RunManifest> load_manifests(const fs::path& root) {
  if (!fs::exists(root)) {
    throw IoError("no such directory " + root.string());
  }
  std::vector<fs::path> paths;
  if (fs::is_regular_file(root / "manifest.json")) {
    paths.push_back(root / "manifest.json");
  }
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_directory() && fs::is_regular_file(entry.path() / "manifest.json")) {
      paths.push_back(entry.path() / "manifest.json");
    }
  }
  std::sort(paths.begin(), paths.end());
  std::vector<RunManifest> out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    out.push_back(load_manifest(p));
  }
  return out;
}

std::string resolve_key(const std::string& name) {
  if (config::is_known_key(name)) {
    return name;
  }
  std::vector<std::string> hits;
  for (const auto& key : config::known_keys()) {
    if (key.size() > name.size() && key.ends_with("." + name)) {
      hits.push_back(key);
    }
  }
  if (hits.size() == 1) {
    return hits.front();
  }
  if (hits.empty()) {
    throw ContractError("unknown config field '" + name + "'");
  }
  throw ContractError("ambiguous config field '" + name + "' (" + csv::join(hits) + ")");
}

SweepAxis parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
    throw ContractError("axis must look like key=v1,v2,...; got '" + spec + "'");
  }
  SweepAxis axis;
  axis.key = resolve_key(spec.substr(0, eq));
  axis.values = csv::split(std::string_view(spec).substr(eq + 1));
  return axis;
}

std::vector<RunManifest> SweepResult::manifests() const {
  std::vector<RunManifest> out;
  for (const auto& c : cells) {
    if (c.manifest) {
      out.push_back(*c.manifest);
    }
  }
  return out;
}

std::size_t SweepResult::failures() const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const auto& c) { return !c.error.empty(); }));
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  r.n = values.size();
  if (r.n == 0) {
    r.mean = r.std = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  r.mean = sum / static_cast<double>(r.n);
  if (r.n < 2) {
    r.std = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  double ss = 0.0;
  for (double v : values) {
    ss += (v - r.mean) * (v - r.mean);
  }
  r.std = std::sqrt(ss / static_cast<double>(r.n - 1));
  return r;
}

void write_aggregate(const std::vector<SweepAxis>& axes, const std::vector<SweepCell>& cells,
                     const fs::path& path) {
  std::vector<std::string> header;
  for (const auto& a : axes) {
    header.push_back(a.key);
  }
  header.insert(header.end(), {"n_runs", "n_failed"});
  for (const auto& name : aggregate_metrics()) {
    header.push_back(name + "_mean");
    header.push_back(name + "_std");
  }
  CsvFile f(path, header);

  // Group cells by their axis assignment, keeping first-seen order.
  std::vector<std::vector<std::pair<std::string, std::string>>> keys;
  std::vector<std::vector<const SweepCell*>> groups;
  for (const auto& c : cells) {
    auto it = std::find(keys.begin(), keys.end(), c.assignment);
    if (it == keys.end()) {
      keys.push_back(c.assignment);
      groups.emplace_back();
      it = keys.end() - 1;
    }
    groups[static_cast<std::size_t>(it - keys.begin())].push_back(&c);
  }
  for (std::size_t g = 0; g < keys.size(); ++g) {
    std::vector<std::string> row;
    for (const auto& [key, value] : keys[g]) {
      row.push_back(value);
    }
    std::size_t ok = 0, failed = 0;
    for (const SweepCell* c : groups[g]) {
      c->manifest ? ++ok : ++failed;
    }
    row.push_back(str(ok));
    row.push_back(str(failed));
    for (const auto& name : aggregate_metrics()) {
      std::vector<double> values;
      for (const SweepCell* c : groups[g]) {
        if (c->manifest) {
          values.push_back(metric(c->manifest->metrics, name));
        }
      }
      const MeanStd s = mean_std(values);
      row.push_back(format_double(s.mean));
      row.push_back(format_double(s.std));
    }
    f.row(row);
  }
  f.close();
}

SweepResult sweep(const ExperimentConfig& base, const std::vector<SweepAxis>& axes,
                  const std::vector<std::uint64_t>& seeds, const SweepOptions& opts) {
  if (seeds.empty()) {
    throw ContractError("sweep needs at least one seed");
  }
  for (const auto& a : axes) {
    if (!config::is_known_key(a.key)) {
      throw ContractError("sweep axis '" + a.key + "' is not a config field");
    }
    if (a.key == "seed" || a.key == "out_dir") {
      throw ContractError("'" + a.key + "' cannot be a sweep axis");
    }
    if (a.values.empty()) {
      throw ContractError("sweep axis '" + a.key + "' has no values");
    }
  }

  // Cartesian product, last axis fastest, seeds innermost.
  SweepResult result;
  std::size_t total = 1;
  for (const auto& a : axes) {
    total *= a.values.size();
  }
  for (std::size_t c = 0; c < total; ++c) {
    std::vector<std::pair<std::string, std::string>> assignment(axes.size());
    std::size_t rest = c;
    for (std::size_t a = axes.size(); a-- > 0;) {
      assignment[a] = {axes[a].key, axes[a].values[rest % axes[a].values.size()]};
      rest /= axes[a].values.size();
    }
    for (std::uint64_t seed : seeds) {
      SweepCell cell;
      cell.assignment = assignment;
      cell.seed = seed;
      cell.dir = base.out_dir / cell_name(assignment, seed);
      result.cells.push_back(std::move(cell));
    }
  }

  std::error_code ec;
  fs::create_directories(base.out_dir, ec);
  if (ec) {
    throw IoError("cannot create sweep directory " + base.out_dir.string());
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < result.cells.size(); i = next++) {
      SweepCell& cell = result.cells[i];
      try {
        ExperimentConfig cfg = base;
        for (const auto& [key, value] : cell.assignment) {
          config::set_value(cfg, key, value);
        }
        cfg.set_seed(cell.seed);
        cfg.out_dir = cell.dir;
        if (opts.resume && fs::exists(cell.dir / "manifest.json")) {
          RunManifest old = load_manifest(cell.dir / "manifest.json");
          if (old.config == config::to_map(cfg)) {
            cell.manifest = std::move(old);
            continue;
          }
        }
        cell.manifest = run(cfg);
      } catch (const std::exception& e) {
        cell.error = e.what();
        cell.manifest.reset();
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(opts.workers, result.cells.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) {
      pool.emplace_back(worker);
    }
    for (auto& t : pool) {
      t.join();
    }
  }

  // Per-cell status table, then the aggregate; both written from this thread.
  {
    std::vector<std::string> header;
    for (const auto& a : axes) {
      header.push_back(a.key);
    }
    header.insert(header.end(), {"seed", "status", "dir", "train_error", "easy_probe_error",
                                 "hard_probe_error", "mean_ratio", "mean_phantom_ratio", "error"});
    CsvFile f(base.out_dir / "cells.csv", header);
    for (const auto& c : result.cells) {
      std::vector<std::string> row;
      for (const auto& [key, value] : c.assignment) {
        row.push_back(value);
      }
      row.push_back(std::to_string(c.seed));
      row.push_back(c.manifest ? "ok" : "failed");
      row.push_back(c.dir.filename().string());
      for (const auto& name : aggregate_metrics()) {
        row.push_back(c.manifest ? format_double(metric(c.manifest->metrics, name)) : "nan");
      }
      std::string err = c.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      row.push_back(err);
      f.row(row);
    }
    f.close();
  }
  result.aggregate_csv = base.out_dir / "aggregate.csv";
  write_aggregate(axes, result.cells, result.aggregate_csv);
  return result;
}

}  // namespace samlab::runner
