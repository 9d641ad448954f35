#pragma once

#include <string>

#include <Eigen/LU>

#include "cdrinv/sensitivity.hpp"

namespace cdrinv {

struct SnapshotMatrix {
  Matrix columns;  // N_h x (Nbar + 1), column j at time t0 + j * dtau
  double t_m = 0.0;
  double dtau = 0.0;
};

/// Runs the full model on [t0, t_m] and samples every dtau.
SnapshotMatrix collect_snapshots(const ForwardModel& model, const Vector& c0, const Vector& nodal,
                                 double c_up, double t_m, double dtau);

struct TruncationRule {
  enum class Kind { energy_ratio, singular_floor };
  Kind kind = Kind::singular_floor;
  double value = 0.01;

  static TruncationRule energy(double tol) { return {Kind::energy_ratio, tol}; }
  static TruncationRule floor(double tau) { return {Kind::singular_floor, tau}; }
};

/// Smallest k whose energy ratio reaches `tol`, or the count of singular values above a floor.
int truncation_rank(const Vector& singular_values, const TruncationRule& rule);

/// POD basis and the Galerkin-projected implicit Euler operators.
struct PodBasis {
  Matrix modes;            // U_k, N_h x k
  Vector singular_values;  // full spectrum, nonincreasing
  int k = 0;

  Matrix reduced_mass;       // U' M U
  Matrix reduced_operator;   // U' A U
  Matrix reduced_dirichlet;  // U' I_D U
  Matrix reduced_step;       // U' (M + dt A + I_D) U
  Matrix observed_modes;     // rows of U at the outflow nodes
  Eigen::PartialPivLU<Matrix> step_lu;
};

/// Sum over snapshots of |y - U U' y|^2 for orthonormal columns U.
double projection_error(const Matrix& snapshots, const Matrix& modes);

/// Thin SVD of the snapshots; modes only (no projection).
PodBasis truncate(const SnapshotMatrix& snapshots, const TruncationRule& rule);
/// Fills the reduced operators for `model`.
void project(PodBasis& basis, const ForwardModel& model);
PodBasis build_basis(const SnapshotMatrix& snapshots, const TruncationRule& rule, const ForwardModel& model);

struct ReducedTrajectory {
  Matrix coefficients;  // k x (last - first + 1), column 0 is a0
  int first_step = 0;
  Matrix lift(const PodBasis& b) const { return b.modes * coefficients; }
};

/// Implicit Euler on the k-dimensional system from a0 at `first_step` up to `last_step`.
ReducedTrajectory reduced_solve(const PodBasis& basis, const ForwardModel& model, const Vector& a0,
                                const Vector& nodal, double c_up, int first_step, int last_step);

/// (1/nbar) | sum_{j=1..nbar} (Ctilde_j - C_j) |^2, both models started from c0 at t0.
double staleness_index(const PodBasis& basis, const ForwardModel& model, const Vector& c0,
                       const Vector& nodal, double c_up, int n_bar);

struct PodSettings {
  double t_m = 0.5;
  double dtau = 0.0;  // 0 means the model time step
  TruncationRule rule = TruncationRule::floor(0.01);
  double threshold = 0.1;
  int n_bar = 5;
};

/// Predictions from the full model on [t0, t_m] followed by the reduced model
/// on (t_m, tf]. The basis is rebuilt from fresh snapshots whenever the
/// staleness index of the refreshed control exceeds the threshold.
class PodObservationMap final : public ObservationMap {
 public:
  PodObservationMap(const ForwardModel& model, Vector c0, double c_up, PodSettings settings,
                    const Vector& initial_nodal);

  const ForwardModel& model() const override { return *model_; }
  Matrix observe(const Vector& nodal, int last_step) const override;
  ComplexMatrix observe(const ComplexVector& nodal, int last_step) const override;
  bool refresh(const Vector& nodal) override;

  const PodBasis& basis() const { return basis_; }
  int switch_step() const { return switch_step_; }
  int updates() const { return updates_; }
  double last_staleness() const { return last_staleness_; }

 private:
  void rebuild(const Vector& nodal);
  template <typename Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> observe_impl(
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& nodal, int last_step) const;

  const ForwardModel* model_;
  Vector c0_;
  double c_up_;
  PodSettings settings_;
  int switch_step_;
  PodBasis basis_;
  int updates_ = 0;
  double last_staleness_ = 0.0;
};

void write_spectrum_csv(const std::string& path, const Vector& singular_values);

}  // namespace cdrinv
