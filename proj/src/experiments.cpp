#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>

#include "cdrinv/analytic_1d.hpp"
#include "cdrinv/harness.hpp"
#include "harness_internal.hpp"

namespace cdrinv {

using nlohmann::json;
using detail::add_check;
using detail::bundle_file;
using detail::num;

namespace {

const std::vector<ExperimentInfo> kExperiments = {
    {"example1", "known-location recovery of one source, noise-free and noisy, with comparison methods"},
    {"example2", "known-location recovery of two sources, Jacobian cross-checks, homotopy costs"},
    {"pod-table1", "reduced inverse solves of example2 over t_m and the singular-value floor"},
    {"tests1-9", "Algorithms 1-4 on the nine sparse tests, solve counts and analytic cost"},
    {"thresholds-table4", "Algorithm 4 on test 1 over the refinement and active-set thresholds"},
    {"conditioning-vs-h", "Jacobian condition number as the source segments shrink"},
    {"cond-time-localization", "Jacobian conditioning with and without time windows"},
    {"appendixA-stabilization", "oscillations and convergence on coarse and fine meshes"},
    {"ode1d-flatness", "closed-form 1D model: flatness of C(1) in the source position"},
};

std::string canonical(const std::string& name) { return name == "example1-known-location" ? "example1" : name; }

std::ofstream open_csv(ResultBundle& b, const std::string& name) {
  std::ofstream out(bundle_file(b, name));
  if (!out) throw std::runtime_error("cannot write " + name);
  out << std::setprecision(17);
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const Matrix& pick(const Measurements& m, const ExperimentConfig& c) {
  return c.params.value("noisy", false) ? m.noisy : m.clean;
}

// Forward model and full observation map on the inversion mesh.
struct Model2d {
  ForwardModel model;
  FullObservationMap map;
  explicit Model2d(const ExperimentConfig& c) : model(build_mesh(c.mesh), coefficients(c), time_grid(c)), map(model) {}
};

// Largest relative error over the segments that carry a source.
double max_relative_error(const Vector& theta, const ControlVector& truth_cv, const ActiveSet& act) {
  double worst = 0.0;
  for (int i : act.indices) worst = std::max(worst, std::abs(theta[i] - truth_cv.theta[i]) / std::abs(truth_cv.theta[i]));
  return worst;
}

double column_relative(const Matrix& a, const Matrix& ref) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < ref.cols(); ++k) {
    worst = std::max(worst, (a.col(k) - ref.col(k)).norm() / ref.col(k).norm());
  }
  return worst;
}

void trace_metrics(json& j, const OptimizerResult& r) {
  j["iterations"] = r.iterations;
  j["cost"] = r.cost;
  j["stop"] = stop_reason_name(r.stop);
  j["theta"] = std::vector<double>(r.theta.data(), r.theta.data() + r.theta.size());
}

// FD and complex-step columns at the true values against unit responses
// (the model is affine in the control).
void jacobian_checks(const ExperimentConfig& c, Model2d& m, ResultBundle& b) {
  const ControlVector cvt = known_location_control(c.truth, c.mesh.x, c.algorithm.finest_step, false);
  const Parametrization par(cvt.sub, m.model.mesh());
  const ActiveSet act = source_segments(cvt, c.truth);
  const Window w = full_window(m.model.grid());
  const Matrix fd = jacobian_fd(m.map, par, cvt.theta, act, c.algorithm.gn.fd_delta, w);
  const Matrix cs = jacobian_cs(m.map, par, cvt.theta, act, c.algorithm.gn.cs_delta, w);
  Matrix sup(fd.rows(), fd.cols());
  const Vector base = stack_window(m.map.observe(par.nodal(Vector(Vector::Zero(cvt.size()))), w.last), w);
  for (int k = 0; k < act.size(); ++k) {
    Vector e = Vector::Zero(cvt.size());
    e[act.indices[k]] = 1.0;
    sup.col(k) = stack_window(m.map.observe(par.nodal(e), w.last), w) - base;
  }
  const double fd_cs = column_relative(fd, cs);
  const double fd_sup = column_relative(fd, sup);
  const double cs_sup = column_relative(cs, sup);
  b.metrics["jacobian"] = {{"fd_vs_cs", fd_cs}, {"fd_vs_superposition", fd_sup}, {"cs_vs_superposition", cs_sup}};
  add_check(b, "jacobian_fd_vs_cs", fd_cs <= 1e-6, "max column relative difference " + num(fd_cs) + " (limit 1e-6)");
  add_check(b, "jacobian_vs_superposition", std::max(fd_sup, cs_sup) <= 1e-8,
            "fd " + num(fd_sup) + ", cs " + num(cs_sup) + " (limit 1e-8)");
}

void run_example1(const ExperimentConfig& c, ResultBundle& b) {
  const auto t0 = std::chrono::steady_clock::now();
  Model2d m(c);
  const Measurements data = generate_measurements(c);
  const Window w = full_window(m.model.grid());
  const ControlVector cv0 = known_location_control(c.truth, c.mesh.x, c.algorithm.finest_step, true);
  const ControlVector cvt = known_location_control(c.truth, c.mesh.x, c.algorithm.finest_step, false);
  const ActiveSet act = source_segments(cv0, c.truth);
  const GnConfig& gn = c.algorithm.gn;
  const OptimizerResult clean = run_pdgn(m.map, cv0, act, data.clean, w, gn, &c.truth);
  const OptimizerResult noisy = run_pdgn(m.map, cv0, act, data.noisy, w, gn, &c.truth);
  const double secs = seconds_since(t0);

  write_trace_csv(bundle_file(b, "trace_pdgn_clean.csv"), clean.trace);
  write_trace_csv(bundle_file(b, "trace_pdgn_noisy.csv"), noisy.trace);
  const double err_clean = max_relative_error(clean.theta, cvt, act);
  const double err_noisy = max_relative_error(noisy.theta, cvt, act);
  trace_metrics(b.metrics["pdgn_clean"], clean);
  trace_metrics(b.metrics["pdgn_noisy"], noisy);
  b.metrics["pdgn_clean"]["relative_error"] = err_clean;
  b.metrics["pdgn_noisy"]["relative_error"] = err_noisy;

  add_check(b, "noise_free_recovery", err_clean <= 1e-6 && clean.iterations <= 3,
            "relative error " + num(err_clean) + " in " + std::to_string(clean.iterations) +
                " iterations (limits 1e-6, 3)");
  add_check(b, "noisy_recovery", err_noisy <= 0.05 && noisy.iterations <= 20,
            "relative error " + num(err_noisy) + " in " + std::to_string(noisy.iterations) +
                " iterations (limits 0.05, 20)");
  // Wall time goes to the manifest only, so the bundle stays reproducible.
  add_check(b, "runtime_within_60s", secs <= 60.0, "setup and both inversions");

  if (c.params.value("comparison", true)) {
    for (Method method : {Method::levenberg_marquardt, Method::steepest_descent, Method::tikhonov}) {
      const OptimizerResult r = run_comparison(method, m.map, cv0, act, data.noisy, w, gn, &c.truth);
      write_trace_csv(bundle_file(b, std::string("trace_") + method_name(method) + "_noisy.csv"), r.trace);
      json& j = b.metrics[std::string(method_name(method)) + "_noisy"];
      trace_metrics(j, r);
      j["relative_error"] = max_relative_error(r.theta, cvt, act);
    }
  }
  jacobian_checks(c, m, b);
}

void run_example2(const ExperimentConfig& c, ResultBundle& b) {
  Model2d m(c);
  const Measurements data = generate_measurements(c);
  const Window w = full_window(m.model.grid());
  const ControlVector cv0 = known_location_control(c.truth, c.mesh.x, c.algorithm.finest_step, true);
  const ControlVector cvt = known_location_control(c.truth, c.mesh.x, c.algorithm.finest_step, false);
  const ActiveSet act = source_segments(cv0, c.truth);
  const OptimizerResult clean = run_pdgn(m.map, cv0, act, data.clean, w, c.algorithm.gn, &c.truth);
  const OptimizerResult noisy = run_pdgn(m.map, cv0, act, data.noisy, w, c.algorithm.gn, &c.truth);
  write_trace_csv(bundle_file(b, "trace_pdgn_clean.csv"), clean.trace);
  write_trace_csv(bundle_file(b, "trace_pdgn_noisy.csv"), noisy.trace);
  const double err = max_relative_error(clean.theta, cvt, act);
  trace_metrics(b.metrics["pdgn_clean"], clean);
  trace_metrics(b.metrics["pdgn_noisy"], noisy);
  b.metrics["pdgn_clean"]["relative_error"] = err;
  b.metrics["pdgn_noisy"]["relative_error"] = max_relative_error(noisy.theta, cvt, act);
  add_check(b, "noise_free_recovery", err <= 1e-4, "largest relative error " + num(err) + " (limit 1e-4)");
  add_check(b, "final_cost", clean.cost <= 1e-12, "cost " + num(clean.cost) + " (limit 1e-12)");

  const Parametrization par(cv0.sub, m.model.mesh());
  const std::vector<double> h = homotopy_costs(m.map, par, cv0.theta, clean.theta, data.clean, w);
  std::ofstream out = open_csv(b, "homotopy.csv");
  out << "k,cost\n";
  for (std::size_t k = 0; k < h.size(); ++k) out << k << ',' << h[k] << '\n';
  // Steps that overwrite a coordinate with an equal value leave the cost alone;
  // every step that moves one must lower it.
  bool decreasing = true;
  int moved = 0;
  for (std::size_t k = 1; k < h.size(); ++k) {
    if (cv0.theta[k - 1] == clean.theta[k - 1]) {
      decreasing = decreasing && h[k] == h[k - 1];
    } else {
      ++moved;
      decreasing = decreasing && h[k] < h[k - 1];
    }
  }
  add_check(b, "homotopy_decreasing", decreasing,
            std::to_string(moved) + " coordinate moves, cost " + num(h.front()) + " -> " + num(h.back()));
  jacobian_checks(c, m, b);
}

void run_pod_sweep(const ExperimentConfig& c, ResultBundle& b) {
  Model2d m(c);
  const Measurements data = generate_measurements(c);
  const Window w = full_window(m.model.grid());
  const ControlVector cv0 = known_location_control(c.truth, c.mesh.x, c.algorithm.finest_step, true);
  const ControlVector cvt = known_location_control(c.truth, c.mesh.x, c.algorithm.finest_step, false);
  const ActiveSet act = source_segments(cv0, c.truth);
  const Parametrization par(cv0.sub, m.model.mesh());
  const Vector zero_state = Vector::Zero(m.model.num_nodes());
  const auto t_ms = c.params.at("t_m").get<std::vector<double>>();
  const auto taus = c.params.at("tau").get<std::vector<double>>();
  if (t_ms.empty() || taus.empty()) throw ConfigError("params", "t_m and tau lists must be nonempty");
  const Matrix& meas = pick(data, c);

  std::ofstream out = open_csv(b, "pod_sweep.csv");
  out << "t_m,tau,k,iterations,cost,l1_top,l1_bottom,basis_updates\n";
  std::map<std::pair<double, double>, json> rows;
  int max_k = 0;
  for (double tau : taus) {
    for (double t_m : t_ms) {
      PodSettings ps = c.pod;
      ps.t_m = t_m;
      ps.rule = TruncationRule::floor(tau);
      PodObservationMap pm(m.model, zero_state, c.c_up, ps, par.nodal(cv0.theta));
      const OptimizerResult r = run_pdgn(pm, cv0, act, meas, w, c.algorithm.gn, &c.truth);
      const EdgePair l1 = l1_error(ControlVector(cv0.sub, r.theta), c.truth);
      out << t_m << ',' << tau << ',' << pm.basis().k << ',' << r.iterations << ',' << r.cost << ',' << l1.top << ','
          << l1.bottom << ',' << pm.updates() << '\n';
      rows[{tau, t_m}] = {{"t_m", t_m},           {"tau", tau},           {"k", pm.basis().k},
                          {"iterations", r.iterations}, {"cost", r.cost}, {"l1_top", l1.top},
                          {"l1_bottom", l1.bottom}, {"basis_updates", pm.updates()}};
      b.metrics["runs"].push_back(rows[{tau, t_m}]);
      max_k = std::max(max_k, pm.basis().k);
    }
  }
  // Spectrum of the truth's snapshots at the largest t_m.
  const double t_last = *std::max_element(t_ms.begin(), t_ms.end());
  const SnapshotMatrix snaps = collect_snapshots(m.model, zero_state, par.nodal(cvt.theta), c.c_up, t_last, c.pod.dtau);
  write_spectrum_csv(bundle_file(b, "spectrum.csv"), truncate(snaps, c.pod.rule).singular_values);

  // The first tau is the level at which the t_m trend is read.
  std::vector<double> sorted = t_ms;
  std::sort(sorted.begin(), sorted.end());
  bool decreasing = true;
  std::string trend;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double cost = rows[{taus[0], sorted[i]}]["cost"].get<double>();
    if (i > 0) decreasing = decreasing && cost < rows[{taus[0], sorted[i - 1]}]["cost"].get<double>();
    trend += (i ? " > " : "") + num(cost);
  }
  add_check(b, "cost_decreases_with_t_m", decreasing, "tau " + num(taus[0]) + ": " + trend);
  add_check(b, "reduced_dimension", max_k <= 45 && max_k < m.model.num_nodes(),
            "largest k " + std::to_string(max_k) + " of " + std::to_string(m.model.num_nodes()) + " (limit 45)");
  const json& last = rows[{taus[0], t_last}];
  const double cost = last["cost"], l1t = last["l1_top"], l1b = last["l1_bottom"];
  add_check(b, "largest_t_m_converges", cost <= 1e-4 && l1t <= 0.1 && l1b <= 0.1,
            "t_m " + num(t_last) + ": cost " + num(cost) + ", L1 " + num(l1t) + "/" + num(l1b) +
                " (limits 1e-4, 0.1)");
}

std::vector<int> test_list(const ExperimentConfig& c) {
  const auto tests = c.params.at("tests").get<std::vector<int>>();
  if (tests.empty()) throw ConfigError("params.tests", "list is empty");
  for (int t : tests) {
    if (t < 1 || t > 9) throw ConfigError("params.tests", "tests are numbered 1..9");
  }
  return tests;
}

json report_json(const RunReport& r, const CostBreakdown* cost) {
  json j = {{"variant", variant_name(r.variant)},
            {"cost", r.cost},
            {"l1", {r.l1.top, r.l1.bottom}},
            {"distance", {r.distance.top, r.distance.bottom}},
            {"iterations", r.iterations},
            {"outer", r.outer},
            {"solves", r.solves},
            {"step_equivalents", r.step_equivalents},
            {"mean_cond", r.mean_cond},
            {"max_cond", r.max_cond},
            {"stop", r.stop}};
  if (cost) {
    j["analytic_cost"] = cost->total();
    j["analytic_cost_per_jacobian"] = cost->per_jacobian();
  }
  return j;
}

void write_conditioning(std::ofstream& out, const std::string& label, const RunReport& r) {
  for (std::size_t k = 0; k < r.jacobians.size(); ++k) {
    out << label << ',' << k << ',' << r.jacobians[k].window_steps << ',' << r.jacobians[k].cols << ','
        << r.jacobians[k].cond << '\n';
  }
}

void run_tests_suite(const ExperimentConfig& c, ResultBundle& b) {
  const std::vector<int> tests = test_list(c);
  const std::string variants = c.params.at("variants").get<std::string>();
  std::vector<Variant> vs;
  for (char ch : variants) {
    try {
      vs.push_back(parse_variant(std::string(1, ch)));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("params.variants", e.what());
    }
  }
  const auto dims_v = c.params.at("cost_dims").get<std::vector<double>>();
  if (dims_v.size() != 3) throw ConfigError("params.cost_dims", "expected [N_h, N, n_y]");
  const CostDims dims{dims_v[0], dims_v[1], dims_v[2]};

  Model2d m(c);
  const auto suite = sparse_test_suite();
  std::vector<RunReport> reports;
  std::vector<std::string> labels;
  std::map<int, std::map<Variant, RunReport>> by_test;
  std::map<Variant, std::vector<CostBreakdown>> analytic;
  std::ofstream cond = open_csv(b, "conditioning.csv");
  cond << "run,jacobian,window_steps,cols,cond\n";
  for (int t : tests) {
    ExperimentConfig cc = c;
    cc.truth = suite[t - 1];
    InverseProblem problem{&m.map, pick(generate_measurements(cc), c), cc.truth};
    for (Variant v : vs) {
      AlgorithmConfig cfg = c.algorithm;
      cfg.variant = v;
      const RunReport r = run_algorithm(cfg, problem);
      const CostBreakdown cb = analytic_cost(r, dims, m.model.grid().steps);
      const std::string label = "test" + std::to_string(t) + "-" + variant_name(v);
      write_conditioning(cond, label, r);
      json j = report_json(r, &cb);
      j["test"] = t;
      b.metrics["runs"].push_back(j);
      analytic[v].push_back(cb);
      reports.push_back(r);
      labels.push_back(label);
      by_test[t][v] = r;
    }
  }
  write_report_csv(bundle_file(b, "report.csv"), reports, labels);

  const bool all4 = vs.size() == 4 && std::set<Variant>(vs.begin(), vs.end()).size() == 4;
  if (!all4) {
    add_check(b, "all_variants", false, "relational checks need variants 1234, got '" + variants + "'");
    return;
  }
  const int n = static_cast<int>(tests.size());
  int cost_wins = 0, dist_ok = 0, order431 = 0, order21 = 0;
  std::string dist_bad, order_bad;
  for (int t : tests) {
    auto& r = by_test[t];
    const RunReport& a1 = r[Variant::finest];
    const RunReport& a2 = r[Variant::finest_time];
    const RunReport& a3 = r[Variant::adaptive];
    const RunReport& a4 = r[Variant::adaptive_time];
    if (a4.cost <= a3.cost && a4.cost <= a2.cost) ++cost_wins;
    if (a4.distance.top <= 3 && a4.distance.bottom <= 3) {
      ++dist_ok;
    } else {
      dist_bad += " test" + std::to_string(t) + "(" + num(a4.distance.top) + "/" + num(a4.distance.bottom) + ")";
    }
    if (a4.step_equivalents < a3.step_equivalents && a3.step_equivalents < a1.step_equivalents) {
      ++order431;
    } else {
      order_bad += " test" + std::to_string(t);
    }
    if (a2.step_equivalents < a1.step_equivalents) ++order21;
  }
  const int need = (7 * n + 8) / 9;  // 7 of 9, scaled to the selected tests
  add_check(b, "alg4_cost_not_worse", cost_wins >= need,
            std::to_string(cost_wins) + "/" + std::to_string(n) + " tests with Alg 4 cost <= Algs 2 and 3 (need " +
                std::to_string(need) + ")");
  add_check(b, "alg4_distance_at_most_3", dist_ok == n,
            std::to_string(dist_ok) + "/" + std::to_string(n) + " tests" + (dist_bad.empty() ? "" : ", over:" + dist_bad));
  add_check(b, "solves_alg4_lt_alg3_lt_alg1", order431 == n,
            std::to_string(order431) + "/" + std::to_string(n) + " tests" +
                (order_bad.empty() ? "" : ", out of order:" + order_bad));
  add_check(b, "solves_alg2_lt_alg1", order21 == n, std::to_string(order21) + "/" + std::to_string(n) + " tests");

  // Reference orders of magnitude: 8e14, 2e13, 5e12, 8e11. The Alg 1 entry is
  // n_f N N_h^3 for a single Jacobian, so the comparison is per sensitivity
  // computation, averaged over every Jacobian the variant built.
  const std::map<Variant, int> expected = {
      {Variant::finest, 14}, {Variant::finest_time, 13}, {Variant::adaptive, 12}, {Variant::adaptive_time, 11}};
  std::ofstream t2 = open_csv(b, "analytic_cost.csv");
  t2 << "variant,mean_per_jacobian,mean_per_run,jacobians,exponent,expected_exponent\n";
  bool exps = true;
  std::string detail;
  for (Variant v : {Variant::finest, Variant::finest_time, Variant::adaptive, Variant::adaptive_time}) {
    double work = 0.0, per_run = 0.0;
    int jacobians = 0;
    for (const CostBreakdown& cb : analytic[v]) {
      work += cb.sensitivity + cb.svd;
      jacobians += cb.jacobians;
      per_run += cb.total() / analytic[v].size();
    }
    const double mean = jacobians > 0 ? work / jacobians : 0.0;
    const int e = mean > 0.0 ? static_cast<int>(std::floor(std::log10(mean))) : 0;
    exps = exps && e == expected.at(v);
    t2 << variant_name(v) << ',' << mean << ',' << per_run << ',' << jacobians << ',' << e << ','
       << expected.at(v) << '\n';
    b.metrics["analytic_cost"][variant_name(v)] = {{"per_jacobian", mean}, {"per_run", per_run}, {"jacobians", jacobians}};
    detail += std::string(detail.empty() ? "" : ", ") + variant_name(v) + " " + num(mean);
  }
  add_check(b, "analytic_cost_exponents", exps, "per Jacobian: " + detail + " (expected 1e14, 1e13, 1e12, 1e11 orders)");
}

void run_thresholds(const ExperimentConfig& c, ResultBundle& b) {
  const auto pairs = c.params.at("pairs").get<std::vector<std::vector<double>>>();
  if (pairs.empty()) throw ConfigError("params.pairs", "list is empty");
  for (const auto& p : pairs) {
    if (p.size() != 2 || !(p[0] > 0.0) || !(p[1] > 0.0)) throw ConfigError("params.pairs", "expected [eps1, eps2] > 0");
  }
  Model2d m(c);
  InverseProblem problem{&m.map, pick(generate_measurements(c), c), c.truth};
  std::ofstream out = open_csv(b, "threshold_sweep.csv");
  out << "eps1,eps2,distance_top,distance_bottom,iterations,mean_cond,cost\n";
  struct Row {
    double eps1, eps2;
    RunReport r;
  };
  std::vector<Row> rows;
  for (const auto& p : pairs) {
    AlgorithmConfig cfg = c.algorithm;
    cfg.eps1 = p[0];
    cfg.eps2 = p[1];
    const RunReport r = run_algorithm(cfg, problem);
    out << p[0] << ',' << p[1] << ',' << r.distance.top << ',' << r.distance.bottom << ',' << r.iterations << ','
        << r.mean_cond << ',' << r.cost << '\n';
    json j = report_json(r, nullptr);
    j["eps1"] = p[0];
    j["eps2"] = p[1];
    b.metrics["runs"].push_back(j);
    rows.push_back({p[0], p[1], r});
  }
  // The first pair is the baseline; each trend follows one threshold downward
  // with the other held at its baseline value.
  const Row& base = rows.front();
  auto series = [&](bool first) {
    std::vector<const Row*> s;
    for (const Row& r : rows) {
      if ((first ? r.eps2 == base.eps2 : r.eps1 == base.eps1)) s.push_back(&r);
    }
    std::sort(s.begin(), s.end(), [&](const Row* a, const Row* z) { return first ? a->eps1 > z->eps1 : a->eps2 > z->eps2; });
    return s;
  };
  const auto s1 = series(true);
  const auto s2 = series(false);
  auto overref = [](const RunReport& r) { return r.distance.top + r.distance.bottom; };

  bool refine_up = s1.size() >= 2, cond_flat = true;
  std::string d1;
  for (std::size_t i = 0; i < s1.size(); ++i) {
    if (i > 0) {
      refine_up = refine_up && overref(s1[i]->r) >= overref(s1[i - 1]->r);
      cond_flat = cond_flat && std::abs(s1[i]->r.mean_cond - base.r.mean_cond) <= 0.01 * base.r.mean_cond;
    }
    d1 += (i ? "; " : "") + num(s1[i]->eps1) + ": +" + num(overref(s1[i]->r)) + " cond " + num(s1[i]->r.mean_cond);
  }
  refine_up = refine_up && overref(s1.back()->r) > overref(s1.front()->r);
  add_check(b, "eps1_trend", refine_up && cond_flat,
            "lowering eps1 should raise over-refinement at unchanged mean cond: " + d1);

  bool it_up = s2.size() >= 2, cond_up = s2.size() >= 2;
  std::string d2;
  for (std::size_t i = 0; i < s2.size(); ++i) {
    if (i > 0) {
      it_up = it_up && s2[i]->r.iterations >= s2[i - 1]->r.iterations;
      cond_up = cond_up && s2[i]->r.mean_cond >= s2[i - 1]->r.mean_cond;
    }
    d2 += (i ? "; " : "") + num(s2[i]->eps2) + ": " + std::to_string(s2[i]->r.iterations) + " it, cond " +
          num(s2[i]->r.mean_cond);
  }
  it_up = it_up && s2.back()->r.iterations > s2.front()->r.iterations;
  cond_up = cond_up && s2.back()->r.mean_cond > s2.front()->r.mean_cond;
  add_check(b, "eps2_trend", it_up && cond_up, "lowering eps2 should raise iterations and mean cond: " + d2);

  const double mc = base.r.mean_cond;
  const int it = base.r.iterations;
  add_check(b, "baseline", mc >= 7.995 && mc <= 799.5 && it >= 4 && it <= 10,
            "eps " + num(base.eps1) + "/" + num(base.eps2) + ": mean cond " + num(mc) + " (7.995..799.5), " +
                std::to_string(it) + " iterations (4..10)");
}

void run_conditioning_vs_h(const ExperimentConfig& c, ResultBundle& b) {
  auto hs = c.params.at("h").get<std::vector<double>>();
  if (hs.size() < 2) throw ConfigError("params.h", "need at least two widths");
  std::sort(hs.begin(), hs.end(), std::greater<>());
  const double top_end = c.params.at("top_end"), bottom_end = c.params.at("bottom_end");
  const double top_value = c.params.at("top_value"), bottom_value = c.params.at("bottom_value");
  Model2d m(c);
  const Window w = full_window(m.model.grid());
  std::ofstream out = open_csv(b, "cond_vs_h.csv");
  out << "h,cond\n";
  std::vector<double> conds;
  for (double h : hs) {
    const std::vector<SourceSpec> truth = {{Edge::top, {top_end - h, top_end}, top_value},
                                           {Edge::bottom, {bottom_end - h, bottom_end}, bottom_value}};
    const ControlVector cv = known_location_control(truth, c.mesh.x, c.algorithm.finest_step, false);
    const Parametrization par(cv.sub, m.model.mesh());
    const ActiveSet act = source_segments(cv, truth);
    const double k = condition_number(jacobian_fd(m.map, par, cv.theta, act, c.algorithm.gn.fd_delta, w));
    out << h << ',' << k << '\n';
    b.metrics["cond"].push_back({{"h", h}, {"cond", k}});
    conds.push_back(k);
  }
  int increases = 0;
  std::string d;
  for (std::size_t i = 0; i < conds.size(); ++i) {
    if (i > 0 && conds[i] > conds[i - 1]) ++increases;
    d += (i ? " < " : "") + num(conds[i]);
  }
  const int need = static_cast<int>(conds.size()) - 1;
  add_check(b, "cond_increases_as_h_shrinks", increases == need,
            std::to_string(increases) + "/" + std::to_string(need) + " steps increase: " + d);
}

void run_cond_time_localization(const ExperimentConfig& c, ResultBundle& b) {
  const std::vector<int> tests = test_list(c);
  const bool finest = c.params.at("compare_finest").get<bool>();
  Model2d m(c);
  const auto suite = sparse_test_suite();
  std::ofstream cond = open_csv(b, "conditioning.csv");
  cond << "run,jacobian,window_steps,cols,cond\n";
  std::ofstream out = open_csv(b, "max_cond.csv");
  out << "test,variant,max_cond,mean_cond\n";
  struct Tally {
    int le = 0;
    int lt = 0;
    std::string detail;
  };
  Tally adaptive, fine;
  auto tally = [](Tally& t, int test, const RunReport& with, const RunReport& without) {
    if (with.max_cond <= without.max_cond) ++t.le;
    if (with.max_cond < without.max_cond) ++t.lt;
    t.detail += (t.detail.empty() ? "test" : "; test") + std::to_string(test) + " " + num(with.max_cond) + " vs " +
                num(without.max_cond);
  };
  for (int t : tests) {
    ExperimentConfig cc = c;
    cc.truth = suite[t - 1];
    InverseProblem problem{&m.map, pick(generate_measurements(cc), c), cc.truth};
    std::map<Variant, RunReport> r;
    std::vector<Variant> vs = {Variant::adaptive, Variant::adaptive_time};
    if (finest) vs.insert(vs.begin(), {Variant::finest, Variant::finest_time});
    for (Variant v : vs) {
      AlgorithmConfig cfg = c.algorithm;
      cfg.variant = v;
      r[v] = run_algorithm(cfg, problem);
      write_conditioning(cond, "test" + std::to_string(t) + "-" + variant_name(v), r[v]);
      out << t << ',' << variant_name(v) << ',' << r[v].max_cond << ',' << r[v].mean_cond << '\n';
      json j = report_json(r[v], nullptr);
      j["test"] = t;
      b.metrics["runs"].push_back(j);
    }
    tally(adaptive, t, r[Variant::adaptive_time], r[Variant::adaptive]);
    if (finest) tally(fine, t, r[Variant::finest_time], r[Variant::finest]);
  }
  add_check(b, "adaptive_localized_max_cond", adaptive.le >= 2 && adaptive.lt >= 1,
            "Alg 4 vs Alg 3 max cond: " + adaptive.detail + " (need <= on 2 tests, < on 1)");
  if (finest) {
    add_check(b, "finest_localized_max_cond", fine.le >= 2 && fine.lt >= 1,
              "Alg 2 vs Alg 1 max cond: " + fine.detail + " (need <= on 2 tests, < on 1)");
  }
}

void run_stabilization(const ExperimentConfig& c, ResultBundle& b) {
  const auto meshes = c.params.at("meshes").get<std::vector<std::vector<int>>>();
  if (meshes.size() < 2) throw ConfigError("params.meshes", "need at least two meshes");
  for (const auto& mm : meshes) {
    if (mm.size() != 2 || mm[0] < 2 || mm[1] < 2) throw ConfigError("params.meshes", "expected [nx, ny] pairs");
  }
  std::ofstream out = open_csv(b, "stabilization.csv");
  out << "nx,ny,outflow_indicator,domain_indicator,cost,converged,l1_top,l1_bottom,iterations\n";
  struct Row {
    int nodes;
    std::string name;
    double indicator;
    bool converged;
  };
  std::vector<Row> rows;
  for (const auto& mm : meshes) {
    ExperimentConfig cc = c;
    cc.mesh.nx = mm[0];
    cc.mesh.ny = mm[1];
    Model2d m(cc);
    const ControlVector truth = truth_on_finest(c.truth, c.mesh.x, c.algorithm.finest_step);
    const Trajectory traj =
        m.model.solve(Vector::Zero(m.model.num_nodes()), to_nodal_control(truth, m.model.mesh()), c.c_up);
    const double outflow = oscillation_indicator(observe(traj, m.model.observation()));
    const double domain = oscillation_indicator(traj.states);
    InverseProblem problem{&m.map, pick(generate_measurements(cc), c), c.truth};
    const RunReport r = run_algorithm(c.algorithm, problem);
    const bool converged = r.cost <= 1e-4;
    const std::string name = std::to_string(mm[0]) + "x" + std::to_string(mm[1]);
    out << mm[0] << ',' << mm[1] << ',' << outflow << ',' << domain << ',' << r.cost << ',' << converged << ','
        << r.l1.top << ',' << r.l1.bottom << ',' << r.iterations << '\n';
    json j = report_json(r, nullptr);
    j["mesh"] = name;
    j["outflow_indicator"] = outflow;
    j["domain_indicator"] = domain;
    b.metrics["runs"].push_back(j);
    rows.push_back({mm[0] * mm[1], name, outflow, converged});
  }
  const auto coarse = std::min_element(rows.begin(), rows.end(), [](auto& a, auto& z) { return a.nodes < z.nodes; });
  const auto fine = std::max_element(rows.begin(), rows.end(), [](auto& a, auto& z) { return a.nodes < z.nodes; });
  add_check(b, "oscillation_ratio", coarse->indicator >= 10.0 * fine->indicator,
            coarse->name + " " + num(coarse->indicator) + " vs " + fine->name + " " + num(fine->indicator) +
                " on the outflow nodes (need 10x)");
  bool only_fine = fine->converged;
  std::string d;
  for (const Row& r : rows) {
    if (&r != &*fine) only_fine = only_fine && !r.converged;
    d += (d.empty() ? "" : ", ") + r.name + (r.converged ? " converged" : " not converged");
  }
  add_check(b, "converges_only_on_fine_mesh", only_fine, d + " (cost <= 1e-4)");
}

void run_ode1d(const ExperimentConfig& c, ResultBundle& b) {
  const json& p = c.params;
  Ode1dProblem base;
  base.mu = p.at("mu");
  base.u = p.at("u");
  base.M = p.at("M");
  base.h = p.at("h");
  const auto xr = p.at("xm_range").get<std::vector<double>>();
  if (xr.size() != 2 || !(xr[1] > xr[0])) throw ConfigError("params.xm_range", "expected [lo, hi] with hi > lo");
  base.x_m = 0.5 * (xr[0] + xr[1]);
  try {
    base.validate();
    Ode1dProblem lo = base, hi = base;
    lo.x_m = xr[0];
    hi.x_m = xr[1];
    lo.validate();
    hi.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("params", e.what());
  }
  const int points = p.at("points"), levels = p.at("levels"), instances = p.at("random_instances");

  // Random instances against the finite-difference oracle.
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst = 0.0, worst_c5 = 0.0;
  for (int i = 0; i < instances; ++i) {
    Ode1dProblem q;
    q.mu = 0.1 + U(rng);
    q.u = 1.0 + 19.0 * U(rng);
    q.M = 0.5 + 2.0 * U(rng);
    q.h = 0.02 + 0.2 * U(rng);
    q.x_m = q.h + 0.01 + (1.0 - 2.0 * q.h - 0.02) * U(rng);
    q.c_up = U(rng);
    const PiecewiseSolution cf = solve_closed_form(q);
    const FdSolution fd = fd_bvp_solve(q);
    double diff = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < fd.x.size(); ++k) {
      diff = std::max(diff, std::abs(fd.C[k] - cf(fd.x[k])));
      scale = std::max(scale, std::abs(fd.C[k]));
    }
    worst = std::max(worst, diff / scale);
    worst_c5 = std::max(worst_c5, std::abs(cf.c[4] - c5_formula(q)) / std::abs(cf.c[4]));
  }
  add_check(b, "closed_form_vs_fd", worst <= 1e-6,
            "worst relative difference " + num(worst) + " over " + std::to_string(instances) + " instances (limit 1e-6)");
  add_check(b, "c5_formula", worst_c5 <= 1e-10, "worst relative difference " + num(worst_c5));

  const FlatnessStats fs = flatness_study(base, xr[0], xr[1], points);
  {
    std::ofstream out = open_csv(b, "flatness.csv");
    out << "x_m,c1\n";
    for (std::size_t i = 0; i < fs.x_m.size(); ++i) out << fs.x_m[i] << ',' << fs.c1[i] << '\n';
  }
  add_check(b, "flat_at_base_peclet", fs.relative_spread <= 1e-2,
            "Pe " + num(base.peclet()) + ": relative spread " + num(fs.relative_spread) + " (limit 1e-2)");

  const auto sweep = peclet_sweep(base, xr[0], xr[1], points, levels);
  bool nonincreasing = true;
  std::string d;
  std::ofstream out = open_csv(b, "peclet.csv");
  out << "peclet,relative_spread\n";
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    out << sweep[i].peclet << ',' << sweep[i].relative_spread << '\n';
    if (i > 0) nonincreasing = nonincreasing && sweep[i].relative_spread <= sweep[i - 1].relative_spread;
    d += (i ? ", " : "") + num(sweep[i].relative_spread);
    b.metrics["peclet"].push_back({{"peclet", sweep[i].peclet}, {"spread", sweep[i].relative_spread}});
  }
  add_check(b, "spread_nonincreasing_in_peclet", nonincreasing, "spreads as Pe doubles: " + d);

  const double r2 = linearity_r2(base, p.at("M_values").get<std::vector<double>>());
  add_check(b, "linear_in_M", std::abs(1.0 - r2) <= 1e-12, "1 - R^2 = " + num(1.0 - r2));

  write_c1_surface_csv(bundle_file(b, "c1_surface.csv"), base, p.at("surface_h").get<std::vector<double>>(),
                       p.at("surface_xm").get<std::vector<double>>());
  b.metrics["closed_form_vs_fd"] = worst;
  b.metrics["relative_spread"] = fs.relative_spread;
  b.metrics["r2"] = r2;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
  return v;
}

}  // namespace

const std::vector<ExperimentInfo>& list_experiments() { return kExperiments; }

bool is_experiment(const std::string& name) {
  const std::string n = canonical(name);
  return std::any_of(kExperiments.begin(), kExperiments.end(), [&](const ExperimentInfo& e) { return e.name == n; });
}

std::vector<std::vector<SourceSpec>> sparse_test_suite() {
  const Edge T = Edge::top, B = Edge::bottom;
  return {
      {{T, {4.0, 4.5}, 100.0}},
      {{B, {4.0, 4.5}, 100.0}},
      {{T, {1.0, 1.5}, 100.0}},
      {{T, {2.5, 3.5}, 50.0}},
      {{T, {4.5, 5.5}, 60.0}},
      {{T, {1.0, 1.5}, 100.0}, {T, {6.0, 6.5}, 50.0}},
      {{T, {1.5, 2.5}, 60.0}, {B, {1.5, 2.5}, 60.0}},
      {{T, {1.5, 2.5}, 80.0}, {B, {5.5, 6.5}, 50.0}},
      {{T, {0.5, 1.0}, 100.0}, {T, {2.5, 3.0}, 50.0}, {T, {6.0, 7.0}, 30.0}},
  };
}

ExperimentConfig default_config(const std::string& name_in) {
  const std::string name = canonical(name_in);
  if (!is_experiment(name)) throw ConfigError("experiment", "unknown experiment '" + name_in + "'");
  ExperimentConfig c;
  c.experiment = name;
  c.output_dir = "out/" + name;
  const std::vector<SourceSpec> ex2 = {{Edge::top, {4.5, 5.0}, 100.0}, {Edge::bottom, {1.5, 2.0}, 80.0}};
  if (name == "example1") {
    c.mesh.nx = 51;
    c.truth = {{Edge::top, {4.0, 4.5}, 100.0}};
    c.algorithm.gn.tol = 1e-20;
    c.params = {{"comparison", true}};
  } else if (name == "example2") {
    c.mesh.nx = 51;
    c.truth = ex2;
    c.algorithm.gn.tol = 1e-20;
  } else if (name == "pod-table1") {
    c.mesh.nx = 51;
    c.truth = ex2;
    c.algorithm.gn.tol = 1e-20;
    c.use_pod = true;
    c.params = {{"t_m", {0.25, 0.375, 0.5}}, {"tau", {0.01, 1e-4}}, {"noisy", false}};
  } else if (name == "tests1-9") {
    c.params = {{"tests", {1, 2, 3, 4, 5, 6, 7, 8, 9}},
                {"variants", "1234"},
                {"noisy", false},
                {"cost_dims", {1701, 1000, 21}}};
  } else if (name == "thresholds-table4") {
    c.truth = sparse_test_suite()[0];
    c.params = {{"pairs", {{0.4, 0.4}, {0.3, 0.4}, {0.01, 0.4}, {0.4, 0.3}, {0.4, 0.01}, {0.01, 0.01}}},
                {"noisy", false}};
  } else if (name == "conditioning-vs-h") {
    c.mesh.nx = 129;
    c.algorithm.finest_step = 0.0625;
    c.truth = ex2;
    c.params = {{"h", {2.0, 1.0, 0.5, 0.25, 0.125, 0.0625}},
                {"top_end", 5.0},
                {"bottom_end", 2.0},
                {"top_value", 100.0},
                {"bottom_value", 80.0}};
  } else if (name == "cond-time-localization") {
    c.params = {{"tests", {1, 3, 9}}, {"compare_finest", true}, {"noisy", false}};
  } else if (name == "appendixA-stabilization") {
    c.data_mesh = MeshSpec{};
    c.truth = {{Edge::top, {0.5, 1.0}, 100.0}};
    c.params = {{"meshes", {{41, 9}, {81, 13}, {81, 21}}}, {"noisy", false}};
  } else if (name == "ode1d-flatness") {
    const Ode1dProblem p;
    c.params = {{"mu", p.mu},
                {"u", p.u},
                {"M", p.M},
                {"h", p.h},
                {"xm_range", {0.2, 0.8}},
                {"points", 61},
                {"levels", 4},
                {"random_instances", 20},
                {"M_values", {0.5, 1.0, 2.0, 3.0, 5.0}},
                {"surface_h", {0.05, 0.1, 0.15, 0.2}},
                {"surface_xm", linspace(0.1, 0.9, 33)}};
  }
  return c;
}

namespace detail {

void run_named(const ExperimentConfig& c, ResultBundle& b) {
  static const std::map<std::string, void (*)(const ExperimentConfig&, ResultBundle&)> table = {
      {"example1", run_example1},
      {"example2", run_example2},
      {"pod-table1", run_pod_sweep},
      {"tests1-9", run_tests_suite},
      {"thresholds-table4", run_thresholds},
      {"conditioning-vs-h", run_conditioning_vs_h},
      {"cond-time-localization", run_cond_time_localization},
      {"appendixA-stabilization", run_stabilization},
      {"ode1d-flatness", run_ode1d},
  };
  table.at(canonical(c.experiment))(c, b);
}

}  // namespace detail

}  // namespace cdrinv
