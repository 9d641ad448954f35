#include "cdrinv/pod_reduction.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>
#include <type_traits>

#include <Eigen/SVD>

namespace cdrinv {

SnapshotMatrix collect_snapshots(const ForwardModel& model, const Vector& c0, const Vector& nodal,
                                 double c_up, double t_m, double dtau) {
  const TimeGrid& g = model.grid();
  if (dtau <= 0.0) dtau = g.dt;
  if (!(t_m > g.t0) || t_m >= g.tf) throw std::invalid_argument("snapshot horizon t_m must lie in (t0, tf)");
  const double ratio = dtau / g.dt;
  const long stride = std::lround(ratio);
  if (stride < 1 || std::abs(ratio - stride) > 1e-9 * ratio) {
    throw std::invalid_argument("snapshot step must be a multiple of the time step");
  }
  const double nbar_real = (t_m - g.t0) / dtau;
  const long nbar = std::lround(nbar_real);
  if (nbar < 1 || std::abs(nbar_real - nbar) > 1e-9 * nbar_real) {
    throw std::invalid_argument("snapshot step does not divide t_m");
  }
  const int last = static_cast<int>(nbar * stride);
  const Matrix states = model.solve_states(c0, nodal, c_up, last);
  SnapshotMatrix s;
  s.t_m = t_m;
  s.dtau = dtau;
  s.columns.resize(states.rows(), nbar + 1);
  for (long j = 0; j <= nbar; ++j) s.columns.col(j) = states.col(j * stride);
  return s;
}

int truncation_rank(const Vector& sv, const TruncationRule& rule) {
  if (sv.size() == 0 || !(sv[0] > 0.0)) throw std::invalid_argument("snapshots are all zero: no basis");
  const double eps_rank = sv[0] * static_cast<double>(sv.size()) * std::numeric_limits<double>::epsilon();
  int numerical = 0;
  while (numerical < sv.size() && sv[numerical] > eps_rank) ++numerical;
  if (rule.kind == TruncationRule::Kind::singular_floor) {
    int k = 0;
    while (k < sv.size() && sv[k] > rule.value) ++k;
    return k;
  }
  if (!(rule.value > 0.0) || rule.value > 1.0) throw std::invalid_argument("energy ratio must lie in (0, 1]");
  const double total = sv.squaredNorm();
  double acc = 0.0;
  for (int k = 0; k < numerical; ++k) {
    acc += sv[k] * sv[k];
    if (acc / total >= rule.value * (1.0 - 1e-14)) return k + 1;
  }
  return numerical;
}

double projection_error(const Matrix& snapshots, const Matrix& modes) {
  if (modes.rows() != snapshots.rows()) throw std::invalid_argument("modes and snapshots differ in length");
  return (snapshots - modes * (modes.transpose() * snapshots)).squaredNorm();
}

PodBasis truncate(const SnapshotMatrix& snapshots, const TruncationRule& rule) {
  Eigen::BDCSVD<Matrix> svd(snapshots.columns, Eigen::ComputeThinU);
  PodBasis b;
  b.singular_values = svd.singularValues();
  b.k = truncation_rank(b.singular_values, rule);
  if (b.k == 0) throw std::invalid_argument("truncation keeps no mode");
  b.modes = svd.matrixU().leftCols(b.k);
  return b;
}

void project(PodBasis& b, const ForwardModel& model) {
  const FemSystem& sys = model.system();
  const Matrix& u = b.modes;
  b.reduced_mass = u.transpose() * (sys.mass_free * u);
  b.reduced_operator = u.transpose() * (sys.op_free * u);
  b.reduced_dirichlet = u.transpose() * (sys.dirichlet_identity * u);
  b.reduced_step = u.transpose() * (model.step_matrix() * u);
  b.step_lu.compute(b.reduced_step);
  const double rcond = b.step_lu.rcond();
  if (!(rcond > 1e-14)) throw std::runtime_error("reduced step matrix is singular (degenerate basis)");
  const auto& outs = model.observation().outflow_nodes;
  b.observed_modes.resize(static_cast<Eigen::Index>(outs.size()), b.k);
  for (std::size_t r = 0; r < outs.size(); ++r) b.observed_modes.row(static_cast<Eigen::Index>(r)) = u.row(outs[r]);
}

PodBasis build_basis(const SnapshotMatrix& snapshots, const TruncationRule& rule, const ForwardModel& model) {
  PodBasis b = truncate(snapshots, rule);
  project(b, model);
  return b;
}

namespace {

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> reduced_next(const PodBasis& b,
                                                      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& a,
                                                      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& rf) {
  if constexpr (std::is_same_v<Scalar, double>) {
    return b.step_lu.solve(b.reduced_mass * a + rf);
  } else {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(a.size());
    out.real() = b.step_lu.solve(b.reduced_mass * a.real() + rf.real());
    out.imag() = b.step_lu.solve(b.reduced_mass * a.imag() + rf.imag());
    return out;
  }
}

}  // namespace

ReducedTrajectory reduced_solve(const PodBasis& b, const ForwardModel& model, const Vector& a0,
                                const Vector& nodal, double c_up, int first_step, int last_step) {
  if (a0.size() != b.k) throw std::invalid_argument("reduced initial state has wrong length");
  if (first_step < 0 || last_step < first_step || last_step >= model.grid().steps) {
    throw std::out_of_range("reduced solve range outside time grid");
  }
  const Vector rf = b.modes.transpose() * model.forcing(nodal, c_up);
  ReducedTrajectory t;
  t.first_step = first_step;
  t.coefficients.resize(b.k, last_step - first_step + 1);
  t.coefficients.col(0) = a0;
  for (int k = 1; k <= last_step - first_step; ++k) {
    t.coefficients.col(k) = reduced_next<double>(b, t.coefficients.col(k - 1), rf);
  }
  model.counter().reduced_steps += last_step - first_step;
  return t;
}

double staleness_index(const PodBasis& b, const ForwardModel& model, const Vector& c0, const Vector& nodal,
                       double c_up, int n_bar) {
  if (n_bar < 1) throw std::invalid_argument("n_bar must be positive");
  const int first = 0;
  const Matrix full = model.solve_states(c0, nodal, c_up, n_bar);
  const ReducedTrajectory red = reduced_solve(b, model, b.modes.transpose() * c0, nodal, c_up, first, n_bar);
  const Matrix lifted = red.lift(b);
  Vector acc = Vector::Zero(model.num_nodes());
  for (int j = 1; j <= n_bar; ++j) acc += lifted.col(j) - full.col(j);
  return acc.squaredNorm() / n_bar;
}

PodObservationMap::PodObservationMap(const ForwardModel& model, Vector c0, double c_up, PodSettings settings,
                                     const Vector& initial_nodal)
    : model_(&model), c0_(std::move(c0)), c_up_(c_up), settings_(settings) {
  if (settings_.dtau <= 0.0) settings_.dtau = model.grid().dt;
  if (!(settings_.threshold > 0.0)) throw std::invalid_argument("staleness threshold must be positive");
  switch_step_ = static_cast<int>(std::lround((settings_.t_m - model.grid().t0) / model.grid().dt));
  rebuild(initial_nodal);
  updates_ = 0;
}

void PodObservationMap::rebuild(const Vector& nodal) {
  const SnapshotMatrix s = collect_snapshots(*model_, c0_, nodal, c_up_, settings_.t_m, settings_.dtau);
  basis_ = build_basis(s, settings_.rule, *model_);
  ++updates_;
}

bool PodObservationMap::refresh(const Vector& nodal) {
  last_staleness_ = staleness_index(basis_, *model_, c0_, nodal, c_up_, settings_.n_bar);
  if (last_staleness_ <= settings_.threshold) return false;
  rebuild(nodal);
  return true;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> PodObservationMap::observe_impl(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& nodal, int last_step) const {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (last_step < 0) last_step = model_->grid().steps - 1;
  Vec state;
  auto obs = model_->solve_observed(c0_, nodal, c_up_, std::min(last_step, switch_step_), &state);
  if (last_step <= switch_step_) return obs;
  const Vec rf = basis_.modes.transpose().template cast<Scalar>() * model_->forcing(nodal, c_up_);
  Vec a = basis_.modes.transpose().template cast<Scalar>() * state;
  for (int k = switch_step_ + 1; k <= last_step; ++k) {
    a = reduced_next<Scalar>(basis_, a, rf);
    obs.col(k) = basis_.observed_modes.template cast<Scalar>() * a;
  }
  model_->counter().reduced_steps += last_step - switch_step_;
  return obs;
}

Matrix PodObservationMap::observe(const Vector& nodal, int last_step) const {
  return observe_impl<double>(nodal, last_step);
}

ComplexMatrix PodObservationMap::observe(const ComplexVector& nodal, int last_step) const {
  return observe_impl<Complex>(nodal, last_step);
}

void write_spectrum_csv(const std::string& path, const Vector& sv) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(17) << "index,singular_value\n";
  for (Eigen::Index i = 0; i < sv.size(); ++i) out << i + 1 << ',' << sv[i] << '\n';
}

}  // namespace cdrinv
