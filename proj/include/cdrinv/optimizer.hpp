#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cdrinv/sensitivity.hpp"

namespace cdrinv {

enum class JacobianMode { finite_difference, complex_step };

struct GnConfig {
  double tol = 1e-10;
  int max_it = 20;
  double alpha0 = 1.0;
  double alpha_floor = std::ldexp(1.0, -20);
  double reg_alpha = 0.01;  // LM and Tikhonov
  JacobianMode jacobian = JacobianMode::finite_difference;
  double fd_delta = 1e-3;
  double cs_delta = 1e-8;
  TsvdOptions tsvd;
  bool scaling = true;
  // Stop when the accepted update is this small relative to max(1, |theta|).
  double step_tol = 1e-12;

  void validate() const;
};

struct CostEvaluation {
  double value = 0.0;
  Vector step_norms;  // squared residual norm per observed step
};

/// (1/N_w) sum over window steps of |Pi C(theta; j) - C_s(j)|^2
CostEvaluation evaluate_cost(const ObservationMap& map, const Parametrization& param, const Vector& theta,
                             const Matrix& measurements, const Window& w);
double cost_from_residual(const Vector& e, const Window& w);

struct StepResult {
  Vector theta;
  double cost = 0.0;
  double alpha = 0.0;
  int rank = 0;
  bool accepted = false;
};

/// One projected, damped, scaled TSVD Gauss-Newton step on the active set.
/// `scaling` is in active-set order (pass ones to disable).
StepResult gauss_newton_step(const ObservationMap& map, const Parametrization& param, const Vector& theta,
                             const ActiveSet& active, const Matrix& psi, const Vector& e,
                             const Vector& scaling, const Matrix& measurements, const Window& w,
                             double current_cost, const GnConfig& cfg);

enum class StopReason { tolerance, max_iterations, stagnation, small_step, no_parameters };
const char* stop_reason_name(StopReason r);

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;
  double l1_top = 0.0;
  double l1_bottom = 0.0;
  double cond = 0.0;
  int active = 0;
  double damping = 0.0;
  long solves = 0;
};

struct OptimizerResult {
  Vector theta;
  double cost = 0.0;
  int iterations = 0;
  StopReason stop = StopReason::max_iterations;
  std::vector<IterationRecord> trace;
  std::vector<ConditionLogEntry> jacobians;  // one per Jacobian (scaled)
};

enum class Method { pdgn, levenberg_marquardt, steepest_descent, tikhonov };
const char* method_name(Method m);
Method parse_method(const std::string& s);

/// Iterates on the active parameters of `cv0`; the others stay fixed.
/// `truth` (optional) enables the L1 columns of the trace.
OptimizerResult run_pdgn(ObservationMap& map, const ControlVector& cv0, const ActiveSet& active,
                         const Matrix& measurements, const Window& w, const GnConfig& cfg,
                         const std::vector<SourceSpec>* truth = nullptr);

/// LM: (J'J + a I) s = J'e. Steepest descent: s = J'e with a Cauchy initial
/// length. Tikhonov: minimizes |J s - e|^2 + a |theta + s|^2. All damped by
/// bisection and projected onto theta >= 0.
OptimizerResult run_comparison(Method method, ObservationMap& map, const ControlVector& cv0,
                               const ActiveSet& active, const Matrix& measurements, const Window& w,
                               const GnConfig& cfg, const std::vector<SourceSpec>* truth = nullptr);

/// Costs along theta_k(j) = theta_star(j) for j < k, theta_bar(j) otherwise, k = 0..n.
std::vector<double> homotopy_costs(const ObservationMap& map, const Parametrization& param,
                                   const Vector& theta_bar, const Vector& theta_star,
                                   const Matrix& measurements, const Window& w);

void write_trace_csv(const std::string& path, const std::vector<IterationRecord>& trace);

}  // namespace cdrinv
