#include "cdrinv/optimizer.hpp"

#include <fstream>
#include <iomanip>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace cdrinv {

void GnConfig::validate() const {
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (max_it < 1) throw std::invalid_argument("max_it must be at least 1");
  if (!(alpha0 > 0.0) || !(alpha_floor > 0.0) || alpha_floor > alpha0) {
    throw std::invalid_argument("damping bounds must satisfy 0 < floor <= alpha0");
  }
  if (reg_alpha < 0.0) throw std::invalid_argument("regularization alpha must be nonnegative");
  if (!(fd_delta > 0.0) || !(cs_delta > 0.0)) throw std::invalid_argument("perturbations must be positive");
}

double cost_from_residual(const Vector& e, const Window& w) { return e.squaredNorm() / w.count(); }

CostEvaluation evaluate_cost(const ObservationMap& map, const Parametrization& param, const Vector& theta,
                             const Matrix& measurements, const Window& w) {
  const Vector e = residual(map, param, theta, measurements, w);
  const Eigen::Index ny = map.num_outputs();
  CostEvaluation c;
  c.step_norms.resize(w.count());
  for (int k = 0; k < w.count(); ++k) c.step_norms[k] = e.segment(k * ny, ny).squaredNorm();
  c.value = c.step_norms.sum() / w.count();
  return c;
}

namespace {

Vector apply_step(const Vector& theta, const ActiveSet& active, const Vector& s, double alpha) {
  Vector t = theta;
  for (int c = 0; c < active.size(); ++c) {
    const int j = active.indices[c];
    t[j] = std::max(0.0, theta[j] + alpha * s[c]);
  }
  return t;
}

// Halve alpha until `objective` drops below `current`.
template <typename Objective>
StepResult damped_search(const Vector& theta, const ActiveSet& active, const Vector& s, double alpha0,
                         double floor, double current, Objective objective) {
  StepResult r;
  r.theta = theta;
  r.cost = current;
  for (double alpha = alpha0; alpha >= floor; alpha *= 0.5) {
    Vector cand = apply_step(theta, active, s, alpha);
    if (cand == theta) break;
    const double f = objective(cand);
    if (f < current) {
      r.theta = std::move(cand);
      r.cost = f;
      r.alpha = alpha;
      r.accepted = true;
      return r;
    }
  }
  return r;
}

Matrix jacobian(const ObservationMap& map, const Parametrization& param, const Vector& theta,
                const ActiveSet& active, const Window& w, const GnConfig& cfg, const Vector& base) {
  if (cfg.jacobian == JacobianMode::complex_step) {
    return jacobian_cs(map, param, theta, active, cfg.cs_delta, w);
  }
  return jacobian_fd(map, param, theta, active, cfg.fd_delta, w, &base);
}

IterationRecord record(int it, double cost, const Vector& theta, const ControlVector& cv0,
                       const std::vector<SourceSpec>* truth, double cond, int active, double damping,
                       const ObservationMap& map) {
  IterationRecord r;
  r.iteration = it;
  r.cost = cost;
  if (truth) {
    const EdgePair l1 = l1_error(ControlVector(cv0.sub, theta), *truth);
    r.l1_top = l1.top;
    r.l1_bottom = l1.bottom;
  }
  r.cond = cond;
  r.active = active;
  r.damping = damping;
  r.solves = map.model().counter().solves;
  return r;
}

}  // namespace

StepResult gauss_newton_step(const ObservationMap& map, const Parametrization& param, const Vector& theta,
                             const ActiveSet& active, const Matrix& psi, const Vector& e,
                             const Vector& scaling, const Matrix& measurements, const Window& w,
                             double current_cost, const GnConfig& cfg) {
  if (scaling.size() != active.size() || psi.cols() != active.size()) {
    throw std::invalid_argument("scaling, Jacobian and active set disagree in size");
  }
  const Matrix scaled = psi * scaling.asDiagonal();
  const TsvdResult t = tsvd_solve(scaled, e, cfg.tsvd);
  StepResult r = damped_search(theta, active, scaling.cwiseProduct(t.step), cfg.alpha0, cfg.alpha_floor,
                               current_cost,
                               [&](const Vector& cand) {
                                 return evaluate_cost(map, param, cand, measurements, w).value;
                               });
  r.rank = t.rank;
  return r;
}

const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::tolerance: return "tolerance";
    case StopReason::max_iterations: return "max_iterations";
    case StopReason::stagnation: return "stagnation";
    case StopReason::small_step: return "small_step";
    case StopReason::no_parameters: return "no_parameters";
  }
  return "unknown";
}

const char* method_name(Method m) {
  switch (m) {
    case Method::pdgn: return "pdgn";
    case Method::levenberg_marquardt: return "lm";
    case Method::steepest_descent: return "steepest";
    case Method::tikhonov: return "tikhonov";
  }
  return "unknown";
}

Method parse_method(const std::string& s) {
  if (s == "pdgn") return Method::pdgn;
  if (s == "lm") return Method::levenberg_marquardt;
  if (s == "steepest") return Method::steepest_descent;
  if (s == "tikhonov") return Method::tikhonov;
  throw std::invalid_argument("unknown method '" + s + "' (expected pdgn, lm, steepest, tikhonov)");
}

OptimizerResult run_comparison(Method method, ObservationMap& map, const ControlVector& cv0,
                               const ActiveSet& active, const Matrix& measurements, const Window& w,
                               const GnConfig& cfg, const std::vector<SourceSpec>* truth) {
  cfg.validate();
  check_window(w, map.grid());
  const Parametrization param(cv0.sub, map.model().mesh());
  OptimizerResult out;
  out.theta = cv0.theta;

  map.refresh(param.nodal(out.theta));
  const Vector target = stack_window(measurements, w);
  // Prediction at the current iterate; reused until the map changes.
  Vector base = stack_window(map.observe(param.nodal(out.theta), w.last), w);
  out.cost = cost_from_residual(target - base, w);
  out.trace.push_back(record(0, out.cost, out.theta, cv0, truth, 0.0, active.size(), 0.0, map));
  if (active.size() == 0) {
    out.stop = StopReason::no_parameters;
    return out;
  }

  const Vector d = cfg.scaling ? diagonal_scaling(cv0.sub, active) : Vector::Ones(active.size());
  out.stop = StopReason::max_iterations;
  for (int it = 1; it <= cfg.max_it; ++it) {
    if (out.cost < cfg.tol) {
      out.stop = StopReason::tolerance;
      break;
    }
    if (it > 1 && map.refresh(param.nodal(out.theta))) {
      base = stack_window(map.observe(param.nodal(out.theta), w.last), w);
      out.cost = cost_from_residual(target - base, w);
      if (out.cost < cfg.tol) {
        out.stop = StopReason::tolerance;
        break;
      }
    }
    const Vector e = target - base;
    const Matrix psi = jacobian(map, param, out.theta, active, w, cfg, base);
    const Matrix scaled = psi * d.asDiagonal();
    const double cond = condition_number(scaled);
    out.jacobians.push_back(ConditionLogEntry{it, cond, static_cast<int>(psi.rows()), static_cast<int>(psi.cols())});

    Vector last_pred;
    auto data_cost = [&](const Vector& cand) {
      last_pred = stack_window(map.observe(param.nodal(cand), w.last), w);
      return cost_from_residual(target - last_pred, w);
    };
    StepResult step;
    if (method == Method::pdgn) {
      const TsvdResult t = tsvd_solve(scaled, e, cfg.tsvd);
      step = damped_search(out.theta, active, d.cwiseProduct(t.step), cfg.alpha0, cfg.alpha_floor, out.cost,
                           data_cost);
      step.rank = t.rank;
    } else if (method == Method::levenberg_marquardt) {
      Matrix h = psi.transpose() * psi;
      h.diagonal().array() += cfg.reg_alpha;
      const Vector s = h.ldlt().solve(psi.transpose() * e);
      step = damped_search(out.theta, active, s, cfg.alpha0, cfg.alpha_floor, out.cost, data_cost);
    } else if (method == Method::steepest_descent) {
      const Vector g = psi.transpose() * e;
      const double denom = (psi * g).squaredNorm();
      const double len = denom > 0.0 ? g.squaredNorm() / denom : 0.0;
      step = damped_search(out.theta, active, len * g, cfg.alpha0, cfg.alpha_floor, out.cost, data_cost);
    } else {
      Vector ta(active.size());
      for (int c = 0; c < active.size(); ++c) ta[c] = out.theta[active.indices[c]];
      Matrix h = psi.transpose() * psi;
      h.diagonal().array() += cfg.reg_alpha;
      const Vector s = h.ldlt().solve(psi.transpose() * e - cfg.reg_alpha * ta);
      auto penalized = [&](const Vector& cand) {
        double pen = 0.0;
        for (int j : active.indices) pen += cand[j] * cand[j];
        return data_cost(cand) + cfg.reg_alpha * pen / w.count();
      };
      double pen0 = 0.0;
      for (int j : active.indices) pen0 += out.theta[j] * out.theta[j];
      step = damped_search(out.theta, active, s, cfg.alpha0, cfg.alpha_floor,
                           out.cost + cfg.reg_alpha * pen0 / w.count(), penalized);
      if (step.accepted) step.cost = cost_from_residual(target - last_pred, w);
    }

    if (!step.accepted) {
      out.stop = StopReason::stagnation;
      break;
    }
    const double moved = (step.theta - out.theta).norm();
    base = last_pred;
    out.theta = step.theta;
    out.cost = step.cost;
    out.iterations = it;
    out.trace.push_back(record(it, out.cost, out.theta, cv0, truth, cond, active.size(), step.alpha, map));
    if (moved <= cfg.step_tol * std::max(1.0, out.theta.norm())) {
      out.stop = StopReason::small_step;
      break;
    }
    if (out.cost < cfg.tol) {
      out.stop = StopReason::tolerance;
      break;
    }
  }
  return out;
}

OptimizerResult run_pdgn(ObservationMap& map, const ControlVector& cv0, const ActiveSet& active,
                         const Matrix& measurements, const Window& w, const GnConfig& cfg,
                         const std::vector<SourceSpec>* truth) {
  return run_comparison(Method::pdgn, map, cv0, active, measurements, w, cfg, truth);
}

std::vector<double> homotopy_costs(const ObservationMap& map, const Parametrization& param,
                                   const Vector& theta_bar, const Vector& theta_star,
                                   const Matrix& measurements, const Window& w) {
  if (theta_bar.size() != theta_star.size()) throw std::invalid_argument("parameter length mismatch");
  std::vector<double> out;
  Vector t = theta_bar;
  out.push_back(evaluate_cost(map, param, t, measurements, w).value);
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    t[j] = theta_star[j];
    out.push_back(evaluate_cost(map, param, t, measurements, w).value);
  }
  return out;
}

void write_trace_csv(const std::string& path, const std::vector<IterationRecord>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(17) << "iteration,cost,l1_top,l1_bottom,cond,active,damping,solves\n";
  for (const auto& r : trace) {
    out << r.iteration << ',' << r.cost << ',' << r.l1_top << ',' << r.l1_bottom << ',' << r.cond << ','
        << r.active << ',' << r.damping << ',' << r.solves << '\n';
  }
}

}  // namespace cdrinv
