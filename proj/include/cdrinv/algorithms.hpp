#pragma once

#include <string>
#include <vector>

#include "cdrinv/optimizer.hpp"
#include "cdrinv/time_localization.hpp"

namespace cdrinv {

enum class Variant { finest, finest_time, adaptive, adaptive_time };
const char* variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct AlgorithmConfig {
  Variant variant = Variant::adaptive_time;
  double eps1 = 0.4;  // refinement threshold
  double eps2 = 0.4;  // active-set threshold
  double eps3 = 0.4;  // carry-over threshold
  double tol = 1e-10;
  double finest_step = 0.5;
  std::vector<double> coarse = {0.0, 4.0, 8.0};  // initial breakpoints, both edges
  int max_it = 20;       // Alg. 1 GN iterations, Alg. 3 adaptive iterations
  int max_sweeps = 10;   // Algs. 2 and 4
  int max_inner = 20;    // Alg. 4 adaptive iterations per section
  int section_steps = 1; // GN steps per section visit (Alg. 2) or inner iteration (Alg. 4)
  double inner_rel_decrease = 1e-3;
  int refine_cap = 4;
  WindowOptions windows;
  GnConfig gn;

  void validate() const;
};

struct InverseProblem {
  ObservationMap* map = nullptr;
  Matrix measurements;
  std::vector<SourceSpec> truth;  // may be empty when unknown
};

struct JacobianRecord {
  int window_steps = 0;
  int cols = 0;
  double cond = 0.0;
};

struct HistoryEntry {
  int section = -1;  // -1 when the step used the full window
  double window_cost = 0.0;
  ControlVector cv;
};

struct RunReport {
  Variant variant = Variant::finest;
  ControlVector estimate{Subdivision::finest({0.0, 1.0}, 1.0), Vector::Zero(2)};
  EdgePair l1;
  EdgePair distance;
  int iterations = 0;  // GN steps taken, sub-iterations included
  int outer = 0;       // sweeps (2, 4) or adaptive iterations (3)
  double cost = 0.0;   // full-window data misfit of the estimate
  long solves = 0;
  long steps = 0;
  long reduced_steps = 0;
  double step_equivalents = 0.0;  // steps / (N - 1)
  long setup_solves = 0;          // probe solves for the time windows
  std::vector<Window> windows;
  std::vector<JacobianRecord> jacobians;
  double mean_cond = 0.0;
  double max_cond = 0.0;
  std::string stop;
  EdgePair points;  // breakpoints per edge of the estimate
  std::vector<HistoryEntry> history;  // after every GN step or refinement
};

RunReport run_alg1_finest(const AlgorithmConfig& cfg, InverseProblem& problem);
RunReport run_alg2_finest_time(const AlgorithmConfig& cfg, InverseProblem& problem);
RunReport run_alg3_adaptive(const AlgorithmConfig& cfg, InverseProblem& problem);
RunReport run_alg4_adaptive_time(const AlgorithmConfig& cfg, InverseProblem& problem);
RunReport run_algorithm(const AlgorithmConfig& cfg, InverseProblem& problem);

/// Dimensions entering the operation-count model.
struct CostDims {
  double n_h = 0.0;    // mesh nodes
  double steps = 0.0;  // time steps N
  double n_y = 0.0;    // observed nodes
};

struct CostBreakdown {
  double sensitivity = 0.0;
  double svd = 0.0;
  double prediction = 0.0;
  int jacobians = 0;
  double total() const { return sensitivity + svd + prediction; }
  /// Mean cost of one sensitivity computation (Jacobian plus its SVD), the
  /// quantity tabulated per algorithm; zero for a run without Jacobians.
  double per_jacobian() const { return jacobians > 0 ? (sensitivity + svd) / jacobians : 0.0; }
};

/// Per Jacobian with n columns over a window of w steps (scaled to dims.steps):
/// n w N_h^3 + 4 n_y^2 w^2 n + 8 w n_y n^2 + c n^3 + N N_h^3, with c = 9 for the
/// full-horizon variants and 1 for the localized ones. `run_steps` is the
/// time-step count the report was produced with.
CostBreakdown analytic_cost(const RunReport& report, const CostDims& dims, int run_steps);

void write_report_csv(const std::string& path, const std::vector<RunReport>& reports,
                      const std::vector<std::string>& labels);

}  // namespace cdrinv
