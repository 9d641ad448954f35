#pragma once

#include <string>
#include <vector>

#include "cdrinv/control_param.hpp"
#include "cdrinv/forward_solver.hpp"

namespace cdrinv {

/// Maps nodal boundary controls to predicted outflow observations
/// (n_y x N, columns past `last_step` left at zero).
class ObservationMap {
 public:
  virtual ~ObservationMap() = default;

  virtual const ForwardModel& model() const = 0;
  virtual Matrix observe(const Vector& nodal, int last_step) const = 0;
  virtual ComplexMatrix observe(const ComplexVector& nodal, int last_step) const = 0;
  // Called once per optimizer iteration with the accepted control. Returns
  // true when predictions may have changed (cached residuals are stale).
  virtual bool refresh(const Vector& /*nodal*/) { return false; }

  const TimeGrid& grid() const { return model().grid(); }
  int num_outputs() const { return model().num_outputs(); }
};

class FullObservationMap final : public ObservationMap {
 public:
  FullObservationMap(const ForwardModel& model, Vector c0, double c_up);
  // Zero initial state, upstream value from the model coefficients.
  explicit FullObservationMap(const ForwardModel& model);

  const ForwardModel& model() const override { return *model_; }
  Matrix observe(const Vector& nodal, int last_step) const override;
  ComplexMatrix observe(const ComplexVector& nodal, int last_step) const override;

 private:
  const ForwardModel* model_;
  Vector c0_;
  double c_up_;
};

/// Inclusive range of observed time indices.
struct Window {
  int first = 1;
  int last = 0;
  int count() const { return last - first + 1; }
};

/// Steps 1..N-1: every step after the (shared) initial condition.
Window full_window(const TimeGrid& grid);
void check_window(const Window& w, const TimeGrid& grid);

/// Time-major stacking of the window columns: all outputs of step `first`, then the next step, ...
Vector stack_window(const Matrix& obs, const Window& w);

/// Segment values on `sub` mapped through the mesh to nodal controls.
class Parametrization {
 public:
  Parametrization(const Subdivision& sub, const StructuredMesh& mesh);
  const Matrix& map() const { return map_; }
  Vector nodal(const Vector& theta) const { return map_ * theta; }
  ComplexVector nodal(const ComplexVector& theta) const { return map_.cast<Complex>() * theta; }

 private:
  Matrix map_;
};

/// e = R(C_s) - R(Pi C(theta)) over the window.
Vector residual(const ObservationMap& map, const Parametrization& param, const Vector& theta,
                const Matrix& measurements, const Window& w);

/// Forward difference columns for the active parameters. `base` may carry the
/// stacked prediction at theta to save one solve.
Matrix jacobian_fd(const ObservationMap& map, const Parametrization& param, const Vector& theta,
                   const ActiveSet& active, double delta, const Window& w,
                   const Vector* base = nullptr);

/// Complex-step columns: Im(prediction(theta + i delta e_j)) / delta.
Matrix jacobian_cs(const ObservationMap& map, const Parametrization& param, const Vector& theta,
                   const ActiveSet& active, double delta, const Window& w);

/// d_i = (longest active segment) / (segment i length), in active-set order.
Vector diagonal_scaling(const Subdivision& sub, const ActiveSet& active);

struct TsvdOptions {
  double rel_tol = 1e-6;  // drop sigma_i < rel_tol * sigma_1
  double abs_tol = 0.0;   // and sigma_i <= abs_tol
  int max_rank = -1;      // keep at most this many triplets when >= 0
};

struct TsvdResult {
  Vector step;
  Vector singular_values;
  int rank = 0;
  bool identifiable = true;
};

TsvdResult tsvd_solve(const Matrix& psi, const Vector& e, const TsvdOptions& opts = {});

/// sigma_max / sigma_min over all singular values (infinity when rank deficient).
double condition_number(const Matrix& psi);

struct ConditionLogEntry {
  int iteration = 0;
  double cond = 0.0;
  int rows = 0;
  int cols = 0;
};

void write_condition_log_csv(const std::string& path, const std::vector<ConditionLogEntry>& log);

}  // namespace cdrinv
