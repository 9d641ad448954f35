#include "cdrinv/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

namespace cdrinv {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::finest: return "finest";
    case Variant::finest_time: return "finest_time";
    case Variant::adaptive: return "adaptive";
    case Variant::adaptive_time: return "adaptive_time";
  }
  return "unknown";
}

Variant parse_variant(const std::string& s) {
  if (s == "finest" || s == "1") return Variant::finest;
  if (s == "finest_time" || s == "2") return Variant::finest_time;
  if (s == "adaptive" || s == "3") return Variant::adaptive;
  if (s == "adaptive_time" || s == "4") return Variant::adaptive_time;
  throw std::invalid_argument("unknown variant '" + s + "' (expected finest, finest_time, adaptive, adaptive_time)");
}

void AlgorithmConfig::validate() const {
  if (!(eps1 > 0.0) || !(eps2 > 0.0) || !(eps3 > 0.0)) throw std::invalid_argument("thresholds must be positive");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (!(finest_step > 0.0)) throw std::invalid_argument("finest_step must be positive");
  if (coarse.size() < 2) throw std::invalid_argument("coarse subdivision needs at least two breakpoints");
  if (max_it < 1 || max_sweeps < 1 || max_inner < 1 || section_steps < 1) {
    throw std::invalid_argument("iteration caps must be at least 1");
  }
  if (!(inner_rel_decrease >= 0.0)) throw std::invalid_argument("inner_rel_decrease must be nonnegative");
  gn.validate();
}

namespace {

std::vector<int> merge(std::vector<int> a, const std::vector<int>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

std::vector<int> intersect(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  for (int i : a) {
    if (std::find(b.begin(), b.end(), i) != b.end()) out.push_back(i);
  }
  return out;
}

class Run {
 public:
  Run(const AlgorithmConfig& cfg, InverseProblem& problem, Variant v) : cfg_(cfg), p_(problem) {
    cfg_.variant = v;
    cfg_.validate();
    if (!p_.map) throw std::invalid_argument("inverse problem has no observation map");
    const TimeGrid& g = p_.map->grid();
    if (p_.measurements.rows() != p_.map->num_outputs() || p_.measurements.cols() != g.steps) {
      throw std::invalid_argument("measurements must be n_y x N");
    }
    span_ = p_.map->model().mesh().x_range();
    coarse_ = Subdivision(span_, cfg_.finest_step, cfg_.coarse, cfg_.coarse);
    report_.variant = v;
  }

  const Subdivision& coarse() const { return coarse_; }
  Interval span() const { return span_; }
  ObservationMap& map() { return *p_.map; }

  std::vector<Window> windows(const SectionPartition& part, WindowOptions opts) {
    const ZetaCurves z = zeta_curves(map().model(), part, cfg_.finest_step);
    return select_windows(z, opts);
  }

  void start_counting() {
    report_.setup_solves = map().model().counter().solves;
    map().model().counter().reset();
  }

  void snapshot(int section, double cost, const ControlVector& cv) { report_.history.push_back({section, cost, cv}); }

  OptimizerResult step(const ControlVector& cv, const ActiveSet& active, const Window& w, int max_it,
                       int section = -1) {
    GnConfig gn = cfg_.gn;
    gn.tol = cfg_.tol;
    gn.max_it = max_it;
    OptimizerResult r = run_pdgn(map(), cv, active, p_.measurements, w, gn);
    report_.iterations += r.iterations;
    for (const auto& j : r.jacobians) report_.jacobians.push_back({w.count(), j.cols, j.cond});
    snapshot(section, r.cost, ControlVector(cv.sub, r.theta));
    return r;
  }

  double full_cost(const ControlVector& cv) {
    const Parametrization param(cv.sub, map().model().mesh());
    return evaluate_cost(map(), param, cv.theta, p_.measurements, full_window(map().grid())).value;
  }

  RunReport finish(const ControlVector& cv, const std::string& stop) {
    const SolveCounter& c = map().model().counter();
    report_.solves = c.solves;
    report_.steps = c.steps;
    report_.reduced_steps = c.reduced_steps;
    report_.step_equivalents = static_cast<double>(c.steps) / (map().grid().steps - 1);
    report_.estimate = cv;
    report_.stop = stop;
    if (!p_.truth.empty()) {
      report_.l1 = l1_error(cv, p_.truth);
      report_.distance = distance_from_optimal(cv.sub, coarse_, p_.truth);
    }
    report_.points = {static_cast<double>(cv.sub.breakpoints(Edge::top).size()),
                      static_cast<double>(cv.sub.breakpoints(Edge::bottom).size())};
    double sum = 0.0;
    int finite = 0;
    for (const auto& j : report_.jacobians) {
      if (!std::isfinite(j.cond)) {
        report_.max_cond = std::numeric_limits<double>::infinity();
        continue;
      }
      sum += j.cond;
      ++finite;
      report_.max_cond = std::max(report_.max_cond, j.cond);
    }
    report_.mean_cond = finite ? sum / finite : 0.0;
    // Evaluated after the counters are read so it is not charged to the run.
    report_.cost = full_cost(cv);
    return report_;
  }

  RunReport& report() { return report_; }
  const AlgorithmConfig& cfg() const { return cfg_; }

 private:
  AlgorithmConfig cfg_;
  InverseProblem& p_;
  Interval span_{0.0, 1.0};
  Subdivision coarse_{Subdivision::finest({0.0, 1.0}, 1.0)};
  RunReport report_;
};

}  // namespace

RunReport run_alg1_finest(const AlgorithmConfig& cfg, InverseProblem& problem) {
  Run run(cfg, problem, Variant::finest);
  run.start_counting();
  const ControlVector cv0 = ControlVector::zeros(Subdivision::finest(run.span(), cfg.finest_step));
  const OptimizerResult r =
      run.step(cv0, ActiveSet::all(cv0.size()), full_window(run.map().grid()), cfg.max_it);
  run.report().outer = r.iterations;
  return run.finish(ControlVector(cv0.sub, r.theta), stop_reason_name(r.stop));
}

RunReport run_alg2_finest_time(const AlgorithmConfig& cfg, InverseProblem& problem) {
  Run run(cfg, problem, Variant::finest_time);
  ControlVector cv = ControlVector::zeros(Subdivision::finest(run.span(), cfg.finest_step));
  const SectionPartition part = SectionPartition::from_subdivision(cv.sub);
  WindowOptions wopts = cfg.windows;
  // Onset order is not monotone near the inflow at this resolution.
  wopts.fallback_to_own_support = true;
  run.report().windows = run.windows(part, wopts);
  run.start_counting();

  std::string stop = "max_sweeps";
  for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    if (run.full_cost(cv) < cfg.tol) {
      stop = "tolerance";
      break;
    }
    run.report().outer = sweep;
    bool moved = false;
    std::vector<int> carried;
    for (int i = part.num_sections() - 1; i >= 0; --i) {
      const std::vector<int> active = merge(part.parameters(cv.sub, i), carried);
      const OptimizerResult r = run.step(cv, ActiveSet{active}, run.report().windows[i], cfg.section_steps, i);
      moved = moved || r.iterations > 0;
      cv.theta = r.theta;
      carried = carry_over(cv, active, cfg.eps3);
    }
    if (!moved) {
      stop = "stagnation";
      break;
    }
  }
  return run.finish(cv, stop);
}

RunReport run_alg3_adaptive(const AlgorithmConfig& cfg, InverseProblem& problem) {
  Run run(cfg, problem, Variant::adaptive);
  run.start_counting();
  ControlVector cv = ControlVector::zeros(run.coarse());
  const Window w = full_window(run.map().grid());
  std::vector<int> lambda = ActiveSet::all(cv.size()).indices;

  std::string stop = "max_iterations";
  for (int l = 1; l <= cfg.max_it; ++l) {
    bool refined = false;
    if (l > 1) {
      const Refinement r = refine_by_threshold(cv, cfg.eps1, cfg.refine_cap);
      if (r.bisected > 0) {
        lambda = remap_indices(lambda, r);
        cv = r.cv;
        refined = true;
      }
    }
    if (lambda.empty()) lambda = ActiveSet::all(cv.size()).indices;
    const OptimizerResult res = run.step(cv, ActiveSet{lambda}, w, 1);
    cv.theta = res.theta;
    run.report().outer = l;
    if (res.stop == StopReason::tolerance) {
      stop = "tolerance";
      break;
    }
    if (res.iterations == 0 && !refined) {
      stop = "stagnation";
      break;
    }
    lambda = select_active(cv, cfg.eps2).indices;
  }
  return run.finish(cv, stop);
}

RunReport run_alg4_adaptive_time(const AlgorithmConfig& cfg, InverseProblem& problem) {
  Run run(cfg, problem, Variant::adaptive_time);
  ControlVector cv = ControlVector::zeros(run.coarse());
  const SectionPartition part = SectionPartition::from_subdivision(cv.sub);
  run.report().windows = run.windows(part, cfg.windows);
  run.start_counting();

  std::string stop = "max_sweeps";
  for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    if (run.full_cost(cv) < cfg.tol) {
      stop = "tolerance";
      break;
    }
    run.report().outer = sweep;
    bool changed = false;
    std::vector<int> carried;
    for (int i = part.num_sections() - 1; i >= 0; --i) {
      const Window& w = run.report().windows[i];
      std::vector<int> lambda;
      std::vector<int> estimated;
      for (int l = 1; l <= cfg.max_inner; ++l) {
        estimated = merge(part.parameters(cv.sub, i), carried);
        std::vector<int> active = l == 1 ? estimated : intersect(estimated, lambda);
        if (active.empty()) active = estimated;
        const OptimizerResult res = run.step(cv, ActiveSet{active}, w, cfg.section_steps, i);
        cv.theta = res.theta;
        changed = changed || res.iterations > 0;
        const double before = res.trace.front().cost;
        const double decrease = before > 0.0 ? (before - res.cost) / before : 0.0;

        const Refinement r = refine_by_threshold(cv, cfg.eps1, cfg.refine_cap, &estimated);
        if (r.bisected > 0) {
          carried = remap_indices(carried, r);
          estimated = remap_indices(estimated, r);
          cv = r.cv;
          changed = true;
          run.snapshot(i, res.cost, cv);
        }
        lambda = intersect(select_active(cv, cfg.eps2).indices, estimated);
        if (res.stop == StopReason::tolerance || r.bisected == 0 || decrease < cfg.inner_rel_decrease) break;
      }
      carried = carry_over(cv, estimated, cfg.eps3);
    }
    if (!changed) {
      stop = "stagnation";
      break;
    }
  }
  return run.finish(cv, stop);
}

RunReport run_algorithm(const AlgorithmConfig& cfg, InverseProblem& problem) {
  switch (cfg.variant) {
    case Variant::finest: return run_alg1_finest(cfg, problem);
    case Variant::finest_time: return run_alg2_finest_time(cfg, problem);
    case Variant::adaptive: return run_alg3_adaptive(cfg, problem);
    case Variant::adaptive_time: return run_alg4_adaptive_time(cfg, problem);
  }
  throw std::invalid_argument("unknown variant");
}

CostBreakdown analytic_cost(const RunReport& report, const CostDims& dims, int run_steps) {
  if (run_steps < 2) throw std::invalid_argument("run needs at least two time steps");
  const double scale = dims.steps / (run_steps - 1);
  const double nh3 = dims.n_h * dims.n_h * dims.n_h;
  const bool localized = report.variant == Variant::finest_time || report.variant == Variant::adaptive_time;
  const double c = localized ? 1.0 : 9.0;
  CostBreakdown out;
  for (const auto& j : report.jacobians) {
    const double w = j.window_steps * scale;
    const double n = j.cols;
    out.sensitivity += n * w * nh3;
    out.svd += 4.0 * dims.n_y * dims.n_y * w * w * n + 8.0 * w * dims.n_y * n * n + c * n * n * n;
    out.prediction += dims.steps * nh3;
    ++out.jacobians;
  }
  return out;
}

void write_report_csv(const std::string& path, const std::vector<RunReport>& reports,
                      const std::vector<std::string>& labels) {
  if (labels.size() != reports.size()) throw std::invalid_argument("one label per report");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(10)
      << "label,variant,l1_top,l1_bottom,opt_sub_top,opt_sub_bottom,iterations,outer,cost,solves,steps,"
         "step_equivalents,mean_cond,max_cond,stop\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const RunReport& r = reports[i];
    out << labels[i] << ',' << variant_name(r.variant) << ',' << r.l1.top << ',' << r.l1.bottom << ','
        << r.distance.top << ',' << r.distance.bottom << ',' << r.iterations << ',' << r.outer << ',' << r.cost
        << ',' << r.solves << ',' << r.steps << ',' << r.step_equivalents << ',' << r.mean_cond << ','
        << r.max_cond << ',' << r.stop << '\n';
  }
}

}  // namespace cdrinv
