#include "samlab/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "samlab/csv.hpp"
#include "samlab/errors.hpp"

namespace samlab::config {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  const long long x = csv::parse_int(v);
  if (x < 0) {
    throw ContractError(key + " must be non-negative, got " + v);
  }
  return static_cast<std::size_t>(x);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") {
    return true;
  }
  if (v == "false" || v == "0") {
    return false;
  }
  throw ContractError(key + " expects true or false, got '" + v + "'");
}

std::string fmt(double x) { return csv::format_double(x); }

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

// Canonical order is the order of this table.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    auto add = [&](std::string key, Field f) { t.emplace_back(std::move(key), std::move(f)); };

    add("seed", {[](auto& c, auto& v) { c.set_seed(static_cast<std::uint64_t>(csv::parse_int(v))); },
                 [](auto& c) { return std::to_string(c.seed()); }});
    add("train.mode", {[](auto& c, auto& v) { c.train.mode = optim::mode_from_string(v); },
                       [](auto& c) { return optim::to_string(c.train.mode); }});
    add("train.rho", {[](auto& c, auto& v) { c.train.rho = csv::parse_double(v); },
                      [](auto& c) { return fmt(c.train.rho); }});
    add("train.lr", {[](auto& c, auto& v) { c.train.lr = csv::parse_double(v); },
                     [](auto& c) { return fmt(c.train.lr); }});
    add("train.batch_size", {[](auto& c, auto& v) { c.train.batch_size = parse_count("train.batch_size", v); },
                             [](auto& c) { return std::to_string(c.train.batch_size); }});
    add("train.steps", {[](auto& c, auto& v) { c.train.steps = parse_count("train.steps", v); },
                        [](auto& c) { return std::to_string(c.train.steps); }});
    add("train.epochs", {[](auto& c, auto& v) { c.epochs = parse_count("train.epochs", v); },
                         [](auto& c) { return std::to_string(c.epochs); }});
    add("train.loss", {[](auto& c, auto& v) { c.train.loss = model::loss_kind_from_string(v); },
                       [](auto& c) { return model::to_string(c.train.loss); }});
    // v* is written as "easy,hard"; "none" clears it.
    add("train.v_star",
        {[](auto& c, auto& v) {
           if (v == "none" || v.empty()) {
             c.train.v_star.reset();
             return;
           }
           const auto parts = csv::split(v);
           if (parts.size() != 2) {
             throw ContractError("train.v_star expects 'easy,hard', got '" + v + "'");
           }
           c.train.v_star = std::array<double, 2>{csv::parse_double(trim(parts[0])),
                                                  csv::parse_double(trim(parts[1]))};
         },
         [](auto& c) {
           return c.train.v_star ? fmt((*c.train.v_star)[0]) + "," + fmt((*c.train.v_star)[1])
                                 : std::string("none");
         }});
    // Shorthand for v* = (1, ratio). Reads back as the current ratio.
    add("train.v_star_ratio",
        {[](auto& c, auto& v) {
           if (v == "none" || v.empty()) {
             c.train.v_star.reset();
             return;
           }
           c.train.v_star = std::array<double, 2>{1.0, csv::parse_double(v)};
         },
         [](auto& c) {
           return c.train.v_star ? fmt((*c.train.v_star)[1] / (*c.train.v_star)[0])
                                 : std::string("none");
         }});
    add("train.freeze_v", {[](auto& c, auto& v) { c.train.freeze_v = parse_bool("train.freeze_v", v); },
                           [](auto& c) { return std::string(c.train.freeze_v ? "true" : "false"); }});
    add("data.complexity_deg", {[](auto& c, auto& v) { c.data.complexity_deg = csv::parse_double(v); },
                                [](auto& c) { return fmt(c.data.complexity_deg); }});
    add("data.a_easy", {[](auto& c, auto& v) { c.data.a_easy = csv::parse_double(v); },
                        [](auto& c) { return fmt(c.data.a_easy); }});
    add("data.a_hard", {[](auto& c, auto& v) { c.data.a_hard = csv::parse_double(v); },
                        [](auto& c) { return fmt(c.data.a_hard); }});
    add("data.n", {[](auto& c, auto& v) { c.data.n = parse_count("data.n", v); },
                   [](auto& c) { return std::to_string(c.data.n); }});
    add("data.noise.sigma", {[](auto& c, auto& v) { c.data.noise.gaussian_sigma = csv::parse_double(v); },
                             [](auto& c) { return fmt(c.data.noise.gaussian_sigma); }});
    add("data.noise.flip_p", {[](auto& c, auto& v) { c.data.noise.label_flip_p = csv::parse_double(v); },
                              [](auto& c) { return fmt(c.data.noise.label_flip_p); }});
    add("data.noise.dropout_q", {[](auto& c, auto& v) { c.data.noise.dropout_q = csv::parse_double(v); },
                                 [](auto& c) { return fmt(c.data.noise.dropout_q); }});
    add("data.noise.target", {[](auto& c, auto& v) { c.data.noise.target = data::noise_target_from_string(v); },
                              [](auto& c) { return data::to_string(c.data.noise.target); }});
    add("probe_n", {[](auto& c, auto& v) { c.probe_n = parse_count("probe_n", v); },
                    [](auto& c) { return std::to_string(c.probe_n); }});
    add("record_every", {[](auto& c, auto& v) { c.record_every = parse_count("record_every", v); },
                         [](auto& c) { return std::to_string(c.record_every); }});
    add("analysis_every", {[](auto& c, auto& v) { c.analysis_every = parse_count("analysis_every", v); },
                           [](auto& c) { return std::to_string(c.analysis_every); }});
    add("analysis_rho", {[](auto& c, auto& v) { c.analysis_rho = csv::parse_double(v); },
                         [](auto& c) { return fmt(c.analysis_rho); }});
    add("analyses",
        {[](auto& c, auto& v) {
           c.analyses.clear();
           if (v == "none" || v.empty()) {
             return;
           }
           for (const auto& part : csv::split(v)) {
             c.analyses.insert(analysis_from_string(trim(part)));
           }
         },
         [](auto& c) {
           std::vector<std::string> names;
           for (Analysis a : c.analyses) {
             names.push_back(to_string(a));
           }
           return names.empty() ? std::string("none") : csv::join(names);
         }});
    add("out_dir", {[](auto& c, auto& v) { c.out_dir = v; },
                    [](auto& c) { return c.out_dir.string(); }});
    return t;
  }();
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) {
      return f;
    }
  }
  throw ContractError("unknown config key '" + key + "'");
}

}  // namespace

std::string to_string(Analysis a) {
  switch (a) {
    case Analysis::decomp: return "decomp";
    case Analysis::lorenz: return "lorenz";
    case Analysis::ratios: return "ratios";
    case Analysis::bins: return "bins";
    case Analysis::theory: return "theory";
  }
  return "?";
}

Analysis analysis_from_string(const std::string& s) {
  for (Analysis a : {Analysis::decomp, Analysis::lorenz, Analysis::ratios, Analysis::bins,
                     Analysis::theory}) {
    if (to_string(a) == s) {
      return a;
    }
  }
  throw ContractError("unknown analysis '" + s + "'");
}

std::size_t ExperimentConfig::effective_steps() const {
  if (epochs == 0) {
    return train.steps;
  }
  return (epochs * data.n + train.batch_size - 1) / train.batch_size;
}

void ExperimentConfig::validate() const {
  optim::TrainConfig t = train;
  t.steps = effective_steps();
  t.validate();
  data.validate();
  if (record_every < 1) {
    throw ContractError("record_every must be at least 1");
  }
  if (analysis_every < 1) {
    throw ContractError("analysis_every must be at least 1");
  }
  if (probe_n < 1) {
    throw ContractError("probe_n must be at least 1");
  }
  if (train.seed != data.seed) {
    throw ContractError("train and data seeds differ");
  }
  if (out_dir.empty()) {
    throw ContractError("out_dir is empty");
  }
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) {
      k.push_back(name);
    }
    return k;
  }();
  return keys;
}

bool is_known_key(const std::string& key) {
  const auto& k = known_keys();
  return std::find(k.begin(), k.end(), key) != k.end();
}

void set_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  try {
    field(key).set(cfg, value);
  } catch (const ContractError& e) {
    const std::string what = e.what();
    if (what.find(key) != std::string::npos) {
      throw;
    }
    throw ContractError(key + ": " + what);
  }
}

std::string get_value(const ExperimentConfig& cfg, const std::string& key) {
  return field(key).get(cfg);
}

std::map<std::string, std::string> to_map(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> kv;
  for (const auto& [name, f] : fields()) {
    if (name == "train.v_star_ratio") {
      continue;  // derived view of train.v_star
    }
    kv[name] = f.get(cfg);
  }
  return kv;
}

ExperimentConfig from_map(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  // Table order, so "seed" is applied before anything that could depend on it.
  for (const auto& [name, f] : fields()) {
    if (auto it = kv.find(name); it != kv.end()) {
      set_value(cfg, name, it->second);
    }
  }
  for (const auto& [key, value] : kv) {
    if (!is_known_key(key)) {
      throw ContractError("unknown config key '" + key + "'");
    }
  }
  return cfg;
}

ExperimentConfig parse(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    const std::string t = trim(line);
    if (t.empty()) {
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ContractError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (kv.count(key)) {
      throw ContractError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    kv[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return from_map(kv);
}

ExperimentConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config " + path.string());
  }
  return parse(in);
}

void write(const ExperimentConfig& cfg, std::ostream& out) {
  for (const auto& [name, f] : fields()) {
    if (name == "train.v_star_ratio") {
      continue;
    }
    out << name << " = " << f.get(cfg) << '\n';
  }
}

void save(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write config " + path.string());
  }
  write(cfg, out);
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

}  // namespace samlab::config
