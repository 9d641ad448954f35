#pragma once

#include <atomic>
#include <complex>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/SparseLU>

#include "cdrinv/mesh_fem.hpp"

namespace cdrinv {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

/// Uniform time grid t_k = t0 + k * dt, k = 0..steps-1, with (steps - 1) * dt = tf - t0.
struct TimeGrid {
  double t0 = 0.0;
  double tf = 10.0;
  double dt = 0.05;
  int steps = 201;

  static TimeGrid uniform(double t0, double tf, double dt);
  double time(int k) const { return t0 + k * dt; }
  // Index of the grid point closest to t.
  int index_of(double t) const;
};

struct Trajectory {
  Matrix states;  // N_h x steps
  TimeGrid grid;
};

struct ObservationOperator {
  std::vector<int> outflow_nodes;

  static ObservationOperator outflow(const StructuredMesh& mesh);
  int size() const { return static_cast<int>(outflow_nodes.size()); }
};

/// Observed outflow concentrations: row = outflow node, column = time index.
Matrix observe(const Trajectory& traj, const ObservationOperator& op);

/// Counters for cost accounting. `steps` counts implicit Euler steps of the
/// full model, `solves` counts calls that started a full-model trajectory.
struct SolveCounter {
  std::atomic<long> solves{0};
  std::atomic<long> steps{0};
  std::atomic<long> reduced_steps{0};

  void reset() {
    solves = 0;
    steps = 0;
    reduced_steps = 0;
  }
};

/// Implicit Euler integrator for the assembled system.
///
/// Dirichlet values are held fixed for t > t0; the free unknowns satisfy
/// (M + dt A) C(k+1) = M C(k) + dt F restricted to the free rows. The step
/// matrix is factored once at construction.
class ForwardModel {
 public:
  ForwardModel(StructuredMesh mesh, const PhysicalCoefficients& coeffs, TimeGrid grid);

  const StructuredMesh& mesh() const { return mesh_; }
  const FemSystem& system() const { return system_; }
  const TimeGrid& grid() const { return grid_; }
  const ObservationOperator& observation() const { return observation_; }
  double c_up() const { return c_up_; }
  int num_nodes() const { return mesh_.num_nodes(); }
  int num_outputs() const { return observation_.size(); }
  int num_controls() const { return static_cast<int>(system_.horizontal_nodes.size()); }

  /// The implicit Euler step matrix with Dirichlet rows replaced by identity.
  const SparseMatrix& step_matrix() const { return step_matrix_; }

  Vector step(const Vector& state, const Vector& control, double c_up) const;

  Trajectory solve(const Vector& c0, const Vector& control, double c_up) const;
  /// Full states for time indices 0..last_step (N_h x (last_step + 1)).
  Matrix solve_states(const Vector& c0, const Vector& control, double c_up, int last_step) const;

  /// Observations only, integrating up to and including time index `last_step`
  /// (defaults to the full grid). Columns past `last_step` are left at zero.
  /// When `final_state` is given it receives the full state at `last_step`.
  Matrix solve_observed(const Vector& c0, const Vector& control, double c_up, int last_step = -1,
                        Vector* final_state = nullptr) const;
  ComplexMatrix solve_observed(const Vector& c0, const ComplexVector& control, double c_up,
                               int last_step = -1, ComplexVector* final_state = nullptr) const;

  /// Constant part of the step right-hand side: dt F + I_D g.
  Vector forcing(const Vector& control, double c_up) const;
  ComplexVector forcing(const ComplexVector& control, double c_up) const;

  /// Steady state A C = F with the same Dirichlet data.
  Vector steady_state(const Vector& control, double c_up) const;

  SolveCounter& counter() const { return *counter_; }

 private:
  template <typename Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> integrate_observed(
      const Vector& c0, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& control, double c_up,
      int last_step, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>* final_state) const;
  template <typename Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> forcing_impl(
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& control, double c_up) const;

  void check_control_size(Eigen::Index n) const;

  StructuredMesh mesh_;
  FemSystem system_;
  TimeGrid grid_;
  ObservationOperator observation_;
  double c_up_;
  SparseMatrix step_matrix_;
  Eigen::SparseLU<SparseMatrix> lu_;
  std::unique_ptr<SolveCounter> counter_;
};

/// Writes rows = time, columns = the given series (one column per row of `values`).
void write_series_csv(const std::string& path, const TimeGrid& grid, const Matrix& values,
                      const std::string& column_prefix);

}  // namespace cdrinv
