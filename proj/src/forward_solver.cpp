#include "cdrinv/forward_solver.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <type_traits>

namespace cdrinv {

TimeGrid TimeGrid::uniform(double t0, double tf, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  if (!(tf > t0)) throw std::invalid_argument("final time must exceed initial time");
  const double n_real = (tf - t0) / dt;
  const long n = std::lround(n_real);
  if (std::abs(n_real - static_cast<double>(n)) > 1e-9 * std::max(1.0, n_real)) {
    throw std::invalid_argument("time step does not divide the time interval");
  }
  TimeGrid g;
  g.t0 = t0;
  g.tf = tf;
  g.dt = dt;
  g.steps = static_cast<int>(n) + 1;
  if (g.steps < 2) throw std::invalid_argument("time grid needs at least two points");
  return g;
}

int TimeGrid::index_of(double t) const {
  const long k = std::lround((t - t0) / dt);
  return static_cast<int>(std::clamp<long>(k, 0, steps - 1));
}

ObservationOperator ObservationOperator::outflow(const StructuredMesh& mesh) {
  return ObservationOperator{mesh.outflow_nodes()};
}

Matrix observe(const Trajectory& traj, const ObservationOperator& op) {
  Matrix out(op.size(), traj.states.cols());
  for (int r = 0; r < op.size(); ++r) {
    const int node = op.outflow_nodes[r];
    if (node < 0 || node >= traj.states.rows()) {
      throw std::out_of_range("observation node " + std::to_string(node) + " out of range");
    }
    out.row(r) = traj.states.row(node);
  }
  return out;
}

ForwardModel::ForwardModel(StructuredMesh mesh, const PhysicalCoefficients& coeffs, TimeGrid grid)
    : mesh_(std::move(mesh)),
      system_(assemble(mesh_, coeffs)),
      grid_(grid),
      observation_(ObservationOperator::outflow(mesh_)),
      c_up_(coeffs.c_up),
      counter_(std::make_unique<SolveCounter>()) {
  step_matrix_ = system_.mass_free + grid_.dt * system_.op_free + system_.dirichlet_identity;
  step_matrix_.makeCompressed();
  lu_.analyzePattern(step_matrix_);
  lu_.factorize(step_matrix_);
  if (lu_.info() != Eigen::Success) {
    throw std::runtime_error("implicit Euler step matrix is singular");
  }
}

void ForwardModel::check_control_size(Eigen::Index n) const {
  if (n != num_controls()) {
    throw std::invalid_argument("nodal control has length " + std::to_string(n) + ", expected " +
                                std::to_string(num_controls()));
  }
}

Vector ForwardModel::step(const Vector& state, const Vector& control, double c_up) const {
  if (state.size() != num_nodes()) throw std::invalid_argument("state length mismatch");
  const Vector f = load_vector(system_, control, c_up);
  const Vector g = dirichlet_values(system_, control, c_up);
  const Vector rhs = system_.mass_free * state + grid_.dt * f + system_.dirichlet_identity * g;
  Vector next = lu_.solve(rhs);
  counter_->steps += 1;
  return next;
}

Trajectory ForwardModel::solve(const Vector& c0, const Vector& control, double c_up) const {
  if (c0.size() != num_nodes()) throw std::invalid_argument("initial state length mismatch");
  check_control_size(control.size());
  const Vector f = load_vector(system_, control, c_up);
  const Vector g = dirichlet_values(system_, control, c_up);
  const Vector forcing = grid_.dt * f + system_.dirichlet_identity * g;

  Trajectory traj;
  traj.grid = grid_;
  traj.states.resize(num_nodes(), grid_.steps);
  traj.states.col(0) = c0;
  for (int k = 1; k < grid_.steps; ++k) {
    const Vector rhs = system_.mass_free * traj.states.col(k - 1) + forcing;
    traj.states.col(k) = lu_.solve(rhs);
  }
  counter_->solves += 1;
  counter_->steps += grid_.steps - 1;
  return traj;
}

Matrix ForwardModel::solve_states(const Vector& c0, const Vector& control, double c_up,
                                  int last_step) const {
  if (c0.size() != num_nodes()) throw std::invalid_argument("initial state length mismatch");
  if (last_step < 0 || last_step >= grid_.steps) throw std::out_of_range("last_step outside time grid");
  if ((control.array() < 0.0).any()) throw std::invalid_argument("boundary control must be nonnegative");
  const Vector f = forcing(control, c_up);
  Matrix states(num_nodes(), last_step + 1);
  states.col(0) = c0;
  for (int k = 1; k <= last_step; ++k) {
    const Vector rhs = system_.mass_free * states.col(k - 1) + f;
    states.col(k) = lu_.solve(rhs);
  }
  counter_->solves += 1;
  counter_->steps += last_step;
  return states;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ForwardModel::forcing_impl(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& control, double c_up) const {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  check_control_size(control.size());
  Vec g = Vec::Zero(num_nodes());
  for (int i : system_.upstream_nodes) g[i] = Scalar(c_up);
  for (std::size_t k = 0; k < system_.horizontal_nodes.size(); ++k) {
    g[system_.horizontal_nodes[k]] = control[static_cast<Eigen::Index>(k)];
  }
  Vec lift = -(system_.op.template cast<Scalar>() * g);
  for (int i : system_.dirichlet_nodes) lift[i] = Scalar(0);
  return Scalar(grid_.dt) * lift + system_.dirichlet_identity.template cast<Scalar>() * g;
}

Vector ForwardModel::forcing(const Vector& control, double c_up) const {
  return forcing_impl<double>(control, c_up);
}

ComplexVector ForwardModel::forcing(const ComplexVector& control, double c_up) const {
  return forcing_impl<Complex>(control, c_up);
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> ForwardModel::integrate_observed(
    const Vector& c0, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& control, double c_up,
    int last_step, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>* final_state) const {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (c0.size() != num_nodes()) throw std::invalid_argument("initial state length mismatch");
  if (last_step < 0) last_step = grid_.steps - 1;
  if (last_step >= grid_.steps) throw std::out_of_range("last_step beyond time grid");

  const Vec forcing = forcing_impl<Scalar>(control, c_up);
  const auto& outs = observation_.outflow_nodes;
  Mat obs = Mat::Zero(static_cast<Eigen::Index>(outs.size()), grid_.steps);
  Vec state = c0.template cast<Scalar>();
  for (std::size_t r = 0; r < outs.size(); ++r) obs(static_cast<Eigen::Index>(r), 0) = state[outs[r]];
  for (int k = 1; k <= last_step; ++k) {
    if constexpr (std::is_same_v<Scalar, double>) {
      const Vec rhs = system_.mass_free * state + forcing;
      state = lu_.solve(rhs);
    } else {
      // The step matrix is real: solve the real and imaginary parts separately.
      const Vector re = lu_.solve(Vector(system_.mass_free * Vector(state.real()) + forcing.real()));
      const Vector im = lu_.solve(Vector(system_.mass_free * Vector(state.imag()) + forcing.imag()));
      state.real() = re;
      state.imag() = im;
    }
    for (std::size_t r = 0; r < outs.size(); ++r) obs(static_cast<Eigen::Index>(r), k) = state[outs[r]];
  }
  counter_->solves += 1;
  counter_->steps += last_step;
  if (final_state) *final_state = std::move(state);
  return obs;
}

Matrix ForwardModel::solve_observed(const Vector& c0, const Vector& control, double c_up,
                                    int last_step, Vector* final_state) const {
  if ((control.array() < 0.0).any()) {
    throw std::invalid_argument("boundary control must be nonnegative");
  }
  return integrate_observed<double>(c0, control, c_up, last_step, final_state);
}

ComplexMatrix ForwardModel::solve_observed(const Vector& c0, const ComplexVector& control,
                                           double c_up, int last_step,
                                           ComplexVector* final_state) const {
  return integrate_observed<Complex>(c0, control, c_up, last_step, final_state);
}

Vector ForwardModel::steady_state(const Vector& control, double c_up) const {
  const Vector f = load_vector(system_, control, c_up);
  const Vector g = dirichlet_values(system_, control, c_up);
  SparseMatrix k = system_.op_free + system_.dirichlet_identity;
  Eigen::SparseLU<SparseMatrix> lu(k);
  if (lu.info() != Eigen::Success) throw std::runtime_error("steady operator is singular");
  const Vector rhs = f + system_.dirichlet_identity * g;
  return lu.solve(rhs);
}

void write_series_csv(const std::string& path, const TimeGrid& grid, const Matrix& values,
                      const std::string& column_prefix) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(17);
  out << "t";
  for (Eigen::Index r = 0; r < values.rows(); ++r) out << ',' << column_prefix << r;
  out << '\n';
  for (Eigen::Index k = 0; k < values.cols(); ++k) {
    out << grid.time(static_cast<int>(k));
    for (Eigen::Index r = 0; r < values.rows(); ++r) out << ',' << values(r, k);
    out << '\n';
  }
}

}  // namespace cdrinv
