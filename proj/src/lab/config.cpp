#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "implab/errors.hpp"
#include "implab/lab.hpp"

namespace implab::lab {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"", {"k", "seed", "output_dir", "cache_dir"}},
      {"geometry", {"side", "points", "gamma_face", "gamma_center_u", "gamma_center_v", "gamma_radius", "widths"}},
      {"solver", {"method", "tolerance", "max_iterations"}},
      {"cgo", {"a", "tolerance", "pad_factor", "seed", "mode", "xi"}},
      {"carleman", {"beta0", "gamma_grid", "h_sequence", "trials", "g_min", "retry_budget"}},
      {"probe",
       {"h0_gamma", "alpha4", "noise_delta", "k_list", "use_synthetic_delta", "lattice_pad", "dq_amplitude"}},
  };
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  char* end = nullptr;
  const double x = std::strtod(t.c_str(), &end);
  if (t.empty() || *end != '\0' || !std::isfinite(x)) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

long long to_int(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  char* end = nullptr;
  const long long x = std::strtoll(t.c_str(), &end, 10);
  if (t.empty() || *end != '\0') throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  char* end = nullptr;
  if (t.empty() || t[0] == '-') throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  const unsigned long long x = std::strtoull(t.c_str(), &end, 10);
  if (*end != '\0') throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, item));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

void require(bool cond, const std::string& key, const std::string& what) {
  if (!cond) throw ConfigError(key + ": " + what);
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

LabConfig from_tree(const pt::ptree& tree) {
  LabConfig cfg;
  std::map<std::string, std::string> kv;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      if (!schema().at("").count(name)) throw ConfigError("unknown top-level key '" + name + "'");
      kv[name] = node.data();
      continue;
    }
    const auto sec = schema().find(name);
    if (name.empty() || sec == schema().end()) throw ConfigError("unknown section [" + name + "]");
    for (const auto& [key, leaf] : node) {
      if (!sec->second.count(key)) throw ConfigError("unknown key '" + name + "." + key + "'");
      kv[name + "." + key] = leaf.data();
    }
  }
  auto get = [&](const std::string& key) -> const std::string* {
    const auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };

  if (auto v = get("k")) cfg.k = to_double("k", *v);
  if (auto v = get("seed")) cfg.seed = to_u64("seed", *v);
  if (auto v = get("output_dir")) cfg.output_dir = trim(*v);
  if (auto v = get("cache_dir")) cfg.cache_dir = trim(*v);

  GeometryConfig& g = cfg.geometry;
  if (auto v = get("geometry.side")) g.side = to_double("geometry.side", *v);
  if (auto v = get("geometry.points")) g.points = int(to_int("geometry.points", *v));
  if (auto v = get("geometry.gamma_face")) g.gamma_face = trim(*v);
  if (auto v = get("geometry.gamma_center_u")) g.gamma_center[0] = to_double("geometry.gamma_center_u", *v);
  if (auto v = get("geometry.gamma_center_v")) g.gamma_center[1] = to_double("geometry.gamma_center_v", *v);
  if (auto v = get("geometry.gamma_radius")) g.gamma_radius = to_double("geometry.gamma_radius", *v);
  if (auto v = get("geometry.widths")) {
    const auto w = to_list("geometry.widths", *v);
    require(w.size() == 4, "geometry.widths", "needs exactly four values");
    for (int i = 0; i < 4; ++i) g.widths[i] = w[i];
  }

  if (auto v = get("solver.method")) cfg.solver.method = parse_solver_method(trim(*v));
  if (auto v = get("solver.tolerance")) cfg.solver.tolerance = to_double("solver.tolerance", *v);
  if (auto v = get("solver.max_iterations")) cfg.solver.max_iterations = int(to_int("solver.max_iterations", *v));

  CgoConfig& c = cfg.cgo;
  if (auto v = get("cgo.a")) c.a = to_double("cgo.a", *v);
  if (auto v = get("cgo.tolerance")) c.tolerance = to_double("cgo.tolerance", *v);
  if (auto v = get("cgo.pad_factor")) c.pad_factor = int(to_int("cgo.pad_factor", *v));
  if (auto v = get("cgo.seed")) c.seed = to_u64("cgo.seed", *v);
  if (auto v = get("cgo.mode")) c.mode = trim(*v);
  if (auto v = get("cgo.xi")) {
    const auto x = to_list("cgo.xi", *v);
    require(x.size() == 3, "cgo.xi", "needs three components");
    c.xi = {x[0], x[1], x[2]};
  }

  CarlemanConfig& cm = cfg.carleman;
  if (auto v = get("carleman.beta0")) cm.beta0 = to_double("carleman.beta0", *v);
  if (auto v = get("carleman.gamma_grid")) cm.gamma_grid = to_list("carleman.gamma_grid", *v);
  if (auto v = get("carleman.h_sequence")) cm.h_sequence = to_list("carleman.h_sequence", *v);
  if (auto v = get("carleman.trials")) cm.trials = int(to_int("carleman.trials", *v));
  if (auto v = get("carleman.g_min")) cm.g_min = to_double("carleman.g_min", *v);
  if (auto v = get("carleman.retry_budget")) cm.retry_budget = int(to_int("carleman.retry_budget", *v));

  ProbeConfig& p = cfg.probe;
  if (auto v = get("probe.h0_gamma")) p.h0_gamma = to_double("probe.h0_gamma", *v);
  if (auto v = get("probe.alpha4")) p.alpha4 = to_double("probe.alpha4", *v);
  if (auto v = get("probe.noise_delta")) p.noise_delta = to_double("probe.noise_delta", *v);
  if (auto v = get("probe.k_list")) p.k_list = to_list("probe.k_list", *v);
  if (auto v = get("probe.use_synthetic_delta")) p.use_synthetic_delta = to_bool("probe.use_synthetic_delta", *v);
  if (auto v = get("probe.lattice_pad")) p.lattice_pad = int(to_int("probe.lattice_pad", *v));
  if (auto v = get("probe.dq_amplitude")) p.dq_amplitude = to_double("probe.dq_amplitude", *v);

  // Ranges. The delta regime itself is checked by the schedule, not here, so
  // that a sweep reports it as a precondition failure.
  require(cfg.k > 0, "k", "must be positive");
  require(!cfg.output_dir.empty(), "output_dir", "must be non-empty");
  require(g.side > 0, "geometry.side", "must be positive");
  require(g.points >= 8, "geometry.points", "must be >= 8");
  require(g.gamma_face == "all" || parse_face(g.gamma_face) >= 0, "geometry.gamma_face", "unknown face");
  require(g.gamma_radius >= 0, "geometry.gamma_radius", "must be >= 0");
  for (int i = 0; i < 2; ++i)
    require(g.gamma_center[i] >= 0 && g.gamma_center[i] <= 1, "geometry.gamma_center", "fractions must lie in [0,1]");
  for (int i = 0; i < 4; ++i) require(g.widths[i] > 0, "geometry.widths", "must be positive");
  require(cfg.solver.tolerance > 0, "solver.tolerance", "must be positive");
  require(cfg.solver.max_iterations > 0, "solver.max_iterations", "must be positive");
  require(c.a > 0, "cgo.a", "must be positive");
  require(c.tolerance > 0, "cgo.tolerance", "must be positive");
  require(c.pad_factor >= 2, "cgo.pad_factor", "must be >= 2");
  require(c.mode == "grid_exact" || c.mode == "continuum", "cgo.mode", "must be grid_exact or continuum");
  require(cm.beta0 > 0, "carleman.beta0", "must be positive");
  require(cm.trials > 0, "carleman.trials", "must be positive");
  require(cm.g_min > 0, "carleman.g_min", "must be positive");
  require(cm.retry_budget > 0, "carleman.retry_budget", "must be positive");
  require(cm.h_sequence.size() >= 2, "carleman.h_sequence", "needs at least two values");
  for (double h : cm.h_sequence) require(h > 0, "carleman.h_sequence", "values must be positive");
  for (double x : cm.gamma_grid) require(x > 0, "carleman.gamma_grid", "values must be positive");
  require(p.h0_gamma > 0, "probe.h0_gamma", "must be positive");
  require(p.alpha4 > 0, "probe.alpha4", "must be positive");
  require(p.noise_delta >= 0, "probe.noise_delta", "must be >= 0");
  require(p.lattice_pad >= 1, "probe.lattice_pad", "must be >= 1");
  require(p.dq_amplitude > 0, "probe.dq_amplitude", "must be positive");
  for (double k : p.k_list) require(k >= 1, "probe.k_list", "values must be >= 1");

  cfg.canonical = canonical_dump(cfg);
  return cfg;
}

}  // namespace

std::string canonical_dump(const LabConfig& c) {
  std::map<std::string, std::string> kv{
      {"k", fmt(c.k)},
      {"seed", std::to_string(c.seed)},
      {"geometry.side", fmt(c.geometry.side)},
      {"geometry.points", std::to_string(c.geometry.points)},
      {"geometry.gamma_face", c.geometry.gamma_face},
      {"geometry.gamma_center_u", fmt(c.geometry.gamma_center[0])},
      {"geometry.gamma_center_v", fmt(c.geometry.gamma_center[1])},
      {"geometry.gamma_radius", fmt(c.geometry.gamma_radius)},
      {"geometry.widths", fmt_list({c.geometry.widths.begin(), c.geometry.widths.end()})},
      {"solver.method", c.solver.method == SolverMethod::Direct ? "direct" : "iterative"},
      {"solver.tolerance", fmt(c.solver.tolerance)},
      {"solver.max_iterations", std::to_string(c.solver.max_iterations)},
      {"cgo.a", fmt(c.cgo.a)},
      {"cgo.tolerance", fmt(c.cgo.tolerance)},
      {"cgo.pad_factor", std::to_string(c.cgo.pad_factor)},
      {"cgo.seed", std::to_string(c.cgo.seed)},
      {"cgo.mode", c.cgo.mode},
      {"cgo.xi", fmt_list({c.cgo.xi.begin(), c.cgo.xi.end()})},
      {"carleman.beta0", fmt(c.carleman.beta0)},
      {"carleman.gamma_grid", fmt_list(c.carleman.gamma_grid)},
      {"carleman.h_sequence", fmt_list(c.carleman.h_sequence)},
      {"carleman.trials", std::to_string(c.carleman.trials)},
      {"carleman.g_min", fmt(c.carleman.g_min)},
      {"carleman.retry_budget", std::to_string(c.carleman.retry_budget)},
      {"probe.h0_gamma", fmt(c.probe.h0_gamma)},
      {"probe.alpha4", fmt(c.probe.alpha4)},
      {"probe.noise_delta", fmt(c.probe.noise_delta)},
      {"probe.k_list", fmt_list(c.probe.k_list)},
      {"probe.use_synthetic_delta", c.probe.use_synthetic_delta ? "true" : "false"},
      {"probe.lattice_pad", std::to_string(c.probe.lattice_pad)},
      {"probe.dq_amplitude", fmt(c.probe.dq_amplitude)},
  };
  // output_dir and cache_dir are locations, not experiment inputs.
  std::string s;
  for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
  return s;
}

LabConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return from_tree(tree);
}

LabConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string default_config_text() {
  return R"(# implab default experiment (17^3 grid, data on a disc in the z+ face)
k = 2
seed = 1
output_dir = out

[geometry]
side = 1.0
points = 17
gamma_face = z+
gamma_center_u = 0.5
gamma_center_v = 0.5
gamma_radius = 0.25
widths = 0.2, 0.15, 0.1, 0.05

[solver]
method = direct
tolerance = 1e-10
max_iterations = 4000

[cgo]
a = 8
tolerance = 1e-12
pad_factor = 2
seed = 1
mode = grid_exact
xi = 0, 0, 0

[carleman]
beta0 = 3
gamma_grid = 1, 2
h_sequence = 0.4, 0.2, 0.1, 0.05
trials = 4
g_min = 0.05
retry_budget = 8

[probe]
h0_gamma = 1
alpha4 = 1
noise_delta = 1e-6
k_list = 2, 4, 8
use_synthetic_delta = true
lattice_pad = 2
dq_amplitude = 1
)";
}

}  // namespace implab::lab
