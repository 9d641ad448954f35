#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "cdrinv/harness.hpp"

namespace cdrinv {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void reject_unknown(const json& j, const std::string& path, const std::set<std::string>& known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError(join(path, it.key()), "unknown field");
  }
}

const json& object_at(const json& j, const std::string& key, const std::string& path) {
  const json& v = j.at(key);
  if (!v.is_object()) throw ConfigError(join(path, key), "expected an object");
  return v;
}

double number(const json& j, const std::string& key, const std::string& path, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(join(path, key), "expected a number");
  return v.get<double>();
}

int integer(const json& j, const std::string& key, const std::string& path, int fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(join(path, key), "expected an integer");
  return v.get<int>();
}

bool boolean(const json& j, const std::string& key, const std::string& path, bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError(join(path, key), "expected true or false");
  return v.get<bool>();
}

std::string text(const json& j, const std::string& key, const std::string& path, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError(join(path, key), "expected a string");
  return v.get<std::string>();
}

Interval interval(const json& j, const std::string& key, const std::string& path, Interval fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ConfigError(join(path, key), "expected [lo, hi]");
  }
  const Interval out{v[0].get<double>(), v[1].get<double>()};
  if (!(out.hi > out.lo)) throw ConfigError(join(path, key), "interval must have hi > lo");
  return out;
}

MeshSpec parse_mesh(const json& j, const std::string& path, MeshSpec m) {
  reject_unknown(j, path, {"x", "y", "nx", "ny"});
  m.x = interval(j, "x", path, m.x);
  m.y = interval(j, "y", path, m.y);
  m.nx = integer(j, "nx", path, m.nx);
  m.ny = integer(j, "ny", path, m.ny);
  if (m.nx < 2) throw ConfigError(join(path, "nx"), "need at least 2 nodes");
  if (m.ny < 2) throw ConfigError(join(path, "ny"), "need at least 2 nodes");
  return m;
}

json mesh_json(const MeshSpec& m) {
  return {{"x", {m.x.lo, m.x.hi}}, {"y", {m.y.lo, m.y.hi}}, {"nx", m.nx}, {"ny", m.ny}};
}

Edge parse_edge(const std::string& s, const std::string& path) {
  if (s == "top") return Edge::top;
  if (s == "bottom") return Edge::bottom;
  throw ConfigError(path, "expected \"top\" or \"bottom\"");
}

std::vector<SourceSpec> parse_truth(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected a list of sources");
  std::vector<SourceSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!j[i].is_object()) throw ConfigError(p, "expected an object");
    reject_unknown(j[i], p, {"edge", "interval", "value"});
    if (!j[i].contains("interval")) throw ConfigError(join(p, "interval"), "required");
    SourceSpec s;
    s.edge = parse_edge(text(j[i], "edge", p, "top"), join(p, "edge"));
    s.span = interval(j[i], "interval", p, {});
    s.value = number(j[i], "value", p, 0.0);
    if (s.value < 0.0) throw ConfigError(join(p, "value"), "source values must be nonnegative");
    out.push_back(s);
  }
  return out;
}

WindowOptions parse_windows(const json& j, const std::string& path, WindowOptions w) {
  reject_unknown(j, path, {"eps4", "d", "D", "fallback_to_own_support"});
  w.eps4 = number(j, "eps4", path, w.eps4);
  w.d = integer(j, "d", path, w.d);
  w.D = integer(j, "D", path, w.D);
  w.fallback_to_own_support = boolean(j, "fallback_to_own_support", path, w.fallback_to_own_support);
  if (!(w.eps4 > 0.0)) throw ConfigError(join(path, "eps4"), "must be positive");
  if (w.d < 0) throw ConfigError(join(path, "d"), "must be nonnegative");
  if (w.D < 0) throw ConfigError(join(path, "D"), "must be nonnegative");
  return w;
}

GnConfig parse_gn(const json& j, const std::string& path, GnConfig g) {
  reject_unknown(j, path, {"tol", "max_it", "alpha0", "alpha_floor", "reg_alpha", "jacobian", "fd_delta", "cs_delta",
                           "tsvd_rel_tol", "scaling", "step_tol"});
  g.tol = number(j, "tol", path, g.tol);
  g.max_it = integer(j, "max_it", path, g.max_it);
  g.alpha0 = number(j, "alpha0", path, g.alpha0);
  g.alpha_floor = number(j, "alpha_floor", path, g.alpha_floor);
  g.reg_alpha = number(j, "reg_alpha", path, g.reg_alpha);
  const std::string jac = text(j, "jacobian", path, g.jacobian == JacobianMode::complex_step ? "cs" : "fd");
  if (jac == "fd") {
    g.jacobian = JacobianMode::finite_difference;
  } else if (jac == "cs") {
    g.jacobian = JacobianMode::complex_step;
  } else {
    throw ConfigError(join(path, "jacobian"), "expected \"fd\" or \"cs\"");
  }
  g.fd_delta = number(j, "fd_delta", path, g.fd_delta);
  g.cs_delta = number(j, "cs_delta", path, g.cs_delta);
  g.tsvd.rel_tol = number(j, "tsvd_rel_tol", path, g.tsvd.rel_tol);
  g.scaling = boolean(j, "scaling", path, g.scaling);
  g.step_tol = number(j, "step_tol", path, g.step_tol);
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  return g;
}

AlgorithmConfig parse_algorithm(const json& j, const std::string& path, AlgorithmConfig a) {
  reject_unknown(j, path, {"variant", "eps1", "eps2", "eps3", "tol", "finest_step", "coarse", "max_it", "max_sweeps",
                           "max_inner", "section_steps", "inner_rel_decrease", "refine_cap", "windows", "gn"});
  if (j.contains("variant")) {
    try {
      a.variant = parse_variant(text(j, "variant", path, ""));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(join(path, "variant"), e.what());
    }
  }
  a.eps1 = number(j, "eps1", path, a.eps1);
  a.eps2 = number(j, "eps2", path, a.eps2);
  a.eps3 = number(j, "eps3", path, a.eps3);
  a.tol = number(j, "tol", path, a.tol);
  a.finest_step = number(j, "finest_step", path, a.finest_step);
  if (j.contains("coarse")) {
    const json& c = j.at("coarse");
    if (!c.is_array()) throw ConfigError(join(path, "coarse"), "expected a list of breakpoints");
    a.coarse.clear();
    for (const json& v : c) {
      if (!v.is_number()) throw ConfigError(join(path, "coarse"), "breakpoints must be numbers");
      a.coarse.push_back(v.get<double>());
    }
  }
  a.max_it = integer(j, "max_it", path, a.max_it);
  a.max_sweeps = integer(j, "max_sweeps", path, a.max_sweeps);
  a.max_inner = integer(j, "max_inner", path, a.max_inner);
  a.section_steps = integer(j, "section_steps", path, a.section_steps);
  a.inner_rel_decrease = number(j, "inner_rel_decrease", path, a.inner_rel_decrease);
  a.refine_cap = integer(j, "refine_cap", path, a.refine_cap);
  if (j.contains("windows")) a.windows = parse_windows(object_at(j, "windows", path), join(path, "windows"), a.windows);
  if (j.contains("gn")) a.gn = parse_gn(object_at(j, "gn", path), join(path, "gn"), a.gn);
  for (const char* key : {"eps1", "eps2", "eps3", "tol", "finest_step"}) {
    const double v = key == std::string("eps1")   ? a.eps1
                     : key == std::string("eps2") ? a.eps2
                     : key == std::string("eps3") ? a.eps3
                     : key == std::string("tol")  ? a.tol
                                                  : a.finest_step;
    if (!(v > 0.0)) throw ConfigError(join(path, key), "must be positive");
  }
  try {
    a.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  return a;
}

PodSettings parse_pod(const json& j, const std::string& path, PodSettings p, bool& enabled) {
  reject_unknown(j, path, {"enabled", "t_m", "dtau", "tau", "energy", "threshold", "n_bar"});
  enabled = boolean(j, "enabled", path, enabled);
  p.t_m = number(j, "t_m", path, p.t_m);
  p.dtau = number(j, "dtau", path, p.dtau);
  if (j.contains("tau") && j.contains("energy")) throw ConfigError(path, "give either tau or energy, not both");
  if (j.contains("energy")) p.rule = TruncationRule::energy(number(j, "energy", path, 0.0));
  if (j.contains("tau")) p.rule = TruncationRule::floor(number(j, "tau", path, 0.0));
  p.threshold = number(j, "threshold", path, p.threshold);
  p.n_bar = integer(j, "n_bar", path, p.n_bar);
  if (!(p.t_m > 0.0)) throw ConfigError(join(path, "t_m"), "must be positive");
  if (p.dtau < 0.0) throw ConfigError(join(path, "dtau"), "must be nonnegative");
  if (!(p.rule.value > 0.0)) throw ConfigError(path, "truncation value must be positive");
  if (p.n_bar < 1) throw ConfigError(join(path, "n_bar"), "must be at least 1");
  return p;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!is_experiment(experiment)) throw ConfigError("experiment", "unknown experiment '" + experiment + "'");
  if (!(mu > 0.0)) throw ConfigError("coefficients.mu", "must be positive");
  if (sigma < 0.0) throw ConfigError("coefficients.sigma", "must be nonnegative");
  if (!(dt > 0.0)) throw ConfigError("time.dt", "must be positive");
  if (!(tf > t0)) throw ConfigError("time.tf", "must exceed t0");
  if (noise_variance < 0.0) throw ConfigError("noise.variance", "must be nonnegative");
  const double step = algorithm.finest_step;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const SourceSpec& s = truth[i];
    const std::string p = "truth[" + std::to_string(i) + "].interval";
    if (s.span.lo < mesh.x.lo - 1e-12 || s.span.hi > mesh.x.hi + 1e-12) throw ConfigError(p, "outside the edge");
    for (double x : {s.span.lo, s.span.hi}) {
      const double k = (x - mesh.x.lo) / step;
      if (std::abs(k - std::round(k)) > 1e-9) {
        throw ConfigError(p, "endpoints must lie on the finest grid (step " + std::to_string(step) + ")");
      }
    }
  }
  if (data_mesh && (data_mesh->x.lo != mesh.x.lo || data_mesh->x.hi != mesh.x.hi || data_mesh->y.lo != mesh.y.lo ||
                    data_mesh->y.hi != mesh.y.hi)) {
    throw ConfigError("data_mesh", "must cover the same domain as mesh");
  }
  if (!params.is_object()) throw ConfigError("params", "expected an object");
  const json shipped = default_config(experiment).params;
  for (auto it = params.begin(); it != params.end(); ++it) {
    if (!shipped.contains(it.key())) throw ConfigError("params." + it.key(), "unknown field");
    if (it.value().type() != shipped.at(it.key()).type() &&
        !(it.value().is_number() && shipped.at(it.key()).is_number())) {
      throw ConfigError("params." + it.key(), std::string("expected ") + shipped.at(it.key()).type_name());
    }
  }
}

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("", "configuration must be a JSON object");
  reject_unknown(j, "", {"experiment", "mesh", "data_mesh", "coefficients", "time", "truth", "noise", "algorithm",
                         "method", "pod", "output_dir", "params"});
  if (!j.contains("experiment")) throw ConfigError("experiment", "required");
  const std::string name = text(j, "experiment", "", "");
  if (!is_experiment(name)) throw ConfigError("experiment", "unknown experiment '" + name + "'");
  // Fields left out keep the values shipped for the experiment.
  ExperimentConfig c = default_config(name);
  if (j.contains("mesh")) c.mesh = parse_mesh(object_at(j, "mesh", ""), "mesh", c.mesh);
  if (j.contains("data_mesh")) {
    if (j.at("data_mesh").is_null()) {
      c.data_mesh.reset();
    } else {
      c.data_mesh = parse_mesh(object_at(j, "data_mesh", ""), "data_mesh", c.data_mesh.value_or(c.mesh));
    }
  }
  if (j.contains("coefficients")) {
    const json& k = object_at(j, "coefficients", "");
    reject_unknown(k, "coefficients", {"mu", "sigma", "c_up", "nu"});
    c.mu = number(k, "mu", "coefficients", c.mu);
    c.sigma = number(k, "sigma", "coefficients", c.sigma);
    c.c_up = number(k, "c_up", "coefficients", c.c_up);
    c.nu = number(k, "nu", "coefficients", c.nu);
  }
  if (j.contains("time")) {
    const json& t = object_at(j, "time", "");
    reject_unknown(t, "time", {"t0", "tf", "dt"});
    c.t0 = number(t, "t0", "time", c.t0);
    c.tf = number(t, "tf", "time", c.tf);
    c.dt = number(t, "dt", "time", c.dt);
  }
  if (j.contains("truth")) c.truth = parse_truth(j.at("truth"), "truth");
  if (j.contains("noise")) {
    const json& n = object_at(j, "noise", "");
    reject_unknown(n, "noise", {"variance", "seed"});
    c.noise_variance = number(n, "variance", "noise", c.noise_variance);
    if (n.contains("seed")) {
      if (!n.at("seed").is_number_unsigned()) throw ConfigError("noise.seed", "expected a nonnegative integer");
      c.seed = n.at("seed").get<std::uint64_t>();
    }
  }
  if (j.contains("algorithm")) c.algorithm = parse_algorithm(object_at(j, "algorithm", ""), "algorithm", c.algorithm);
  if (j.contains("method")) {
    try {
      c.method = parse_method(text(j, "method", "", "pdgn"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("method", e.what());
    }
  }
  if (j.contains("pod")) c.pod = parse_pod(object_at(j, "pod", ""), "pod", c.pod, c.use_pod);
  c.output_dir = text(j, "output_dir", "", c.output_dir);
  if (j.contains("params")) c.params.merge_patch(object_at(j, "params", ""));
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  j["mesh"] = mesh_json(c.mesh);
  if (c.data_mesh) j["data_mesh"] = mesh_json(*c.data_mesh);
  j["coefficients"] = {{"mu", c.mu}, {"sigma", c.sigma}, {"c_up", c.c_up}, {"nu", c.nu}};
  j["time"] = {{"t0", c.t0}, {"tf", c.tf}, {"dt", c.dt}};
  j["truth"] = json::array();
  for (const SourceSpec& s : c.truth) {
    j["truth"].push_back({{"edge", edge_name(s.edge)}, {"interval", {s.span.lo, s.span.hi}}, {"value", s.value}});
  }
  j["noise"] = {{"variance", c.noise_variance}, {"seed", c.seed}};
  const AlgorithmConfig& a = c.algorithm;
  const GnConfig& g = a.gn;
  j["algorithm"] = {
      {"variant", variant_name(a.variant)},
      {"eps1", a.eps1},
      {"eps2", a.eps2},
      {"eps3", a.eps3},
      {"tol", a.tol},
      {"finest_step", a.finest_step},
      {"coarse", a.coarse},
      {"max_it", a.max_it},
      {"max_sweeps", a.max_sweeps},
      {"max_inner", a.max_inner},
      {"section_steps", a.section_steps},
      {"inner_rel_decrease", a.inner_rel_decrease},
      {"refine_cap", a.refine_cap},
      {"windows",
       {{"eps4", a.windows.eps4},
        {"d", a.windows.d},
        {"D", a.windows.D},
        {"fallback_to_own_support", a.windows.fallback_to_own_support}}},
      {"gn",
       {{"tol", g.tol},
        {"max_it", g.max_it},
        {"alpha0", g.alpha0},
        {"alpha_floor", g.alpha_floor},
        {"reg_alpha", g.reg_alpha},
        {"jacobian", g.jacobian == JacobianMode::complex_step ? "cs" : "fd"},
        {"fd_delta", g.fd_delta},
        {"cs_delta", g.cs_delta},
        {"tsvd_rel_tol", g.tsvd.rel_tol},
        {"scaling", g.scaling},
        {"step_tol", g.step_tol}}}};
  j["method"] = method_name(c.method);
  json pod = {{"enabled", c.use_pod},
              {"t_m", c.pod.t_m},
              {"dtau", c.pod.dtau},
              {"threshold", c.pod.threshold},
              {"n_bar", c.pod.n_bar}};
  pod[c.pod.rule.kind == TruncationRule::Kind::energy_ratio ? "energy" : "tau"] = c.pod.rule.value;
  j["pod"] = pod;
  j["output_dir"] = c.output_dir;
  j["params"] = c.params;
  return j;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t config_hash(const ExperimentConfig& c) { return fnv1a64(to_json(c).dump()); }

}  // namespace cdrinv
