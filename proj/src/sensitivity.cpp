#include "cdrinv/sensitivity.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

#include <Eigen/SVD>

namespace cdrinv {

FullObservationMap::FullObservationMap(const ForwardModel& model, Vector c0, double c_up)
    : model_(&model), c0_(std::move(c0)), c_up_(c_up) {
  if (c0_.size() != model.num_nodes()) throw std::invalid_argument("initial state length mismatch");
}

FullObservationMap::FullObservationMap(const ForwardModel& model)
    : FullObservationMap(model, Vector::Zero(model.num_nodes()), model.c_up()) {}

Matrix FullObservationMap::observe(const Vector& nodal, int last_step) const {
  return model_->solve_observed(c0_, nodal, c_up_, last_step);
}

ComplexMatrix FullObservationMap::observe(const ComplexVector& nodal, int last_step) const {
  return model_->solve_observed(c0_, nodal, c_up_, last_step);
}

Window full_window(const TimeGrid& grid) { return Window{1, grid.steps - 1}; }

void check_window(const Window& w, const TimeGrid& grid) {
  if (w.first < 0 || w.last >= grid.steps || w.first > w.last) {
    throw std::out_of_range("time window [" + std::to_string(w.first) + ", " + std::to_string(w.last) +
                            "] outside the time grid [0, " + std::to_string(grid.steps - 1) + "]");
  }
}

Vector stack_window(const Matrix& obs, const Window& w) {
  const Eigen::Index ny = obs.rows();
  Vector out(ny * w.count());
  for (int k = w.first; k <= w.last; ++k) out.segment((k - w.first) * ny, ny) = obs.col(k);
  return out;
}

namespace {

ComplexVector stack_window_complex(const ComplexMatrix& obs, const Window& w) {
  const Eigen::Index ny = obs.rows();
  ComplexVector out(ny * w.count());
  for (int k = w.first; k <= w.last; ++k) out.segment((k - w.first) * ny, ny) = obs.col(k);
  return out;
}

void check_active(const ActiveSet& active, int n) {
  for (int j : active.indices) {
    if (j < 0 || j >= n) throw std::out_of_range("active index " + std::to_string(j) + " out of range");
  }
}

}  // namespace

Parametrization::Parametrization(const Subdivision& sub, const StructuredMesh& mesh)
    : map_(nodal_map(sub, mesh)) {}

Vector residual(const ObservationMap& map, const Parametrization& param, const Vector& theta,
                const Matrix& measurements, const Window& w) {
  check_window(w, map.grid());
  if (measurements.rows() != map.num_outputs() || measurements.cols() < w.last + 1) {
    throw std::invalid_argument("measurements do not cover the window");
  }
  const Matrix pred = map.observe(param.nodal(theta), w.last);
  return stack_window(measurements, w) - stack_window(pred, w);
}

Matrix jacobian_fd(const ObservationMap& map, const Parametrization& param, const Vector& theta,
                   const ActiveSet& active, double delta, const Window& w, const Vector* base) {
  if (!(delta > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  check_window(w, map.grid());
  check_active(active, static_cast<int>(theta.size()));
  Vector p0 = base ? *base : stack_window(map.observe(param.nodal(theta), w.last), w);
  Matrix psi(p0.size(), active.size());
  for (int c = 0; c < active.size(); ++c) {
    Vector t = theta;
    t[active.indices[c]] += delta;
    psi.col(c) = (stack_window(map.observe(param.nodal(t), w.last), w) - p0) / delta;
  }
  return psi;
}

Matrix jacobian_cs(const ObservationMap& map, const Parametrization& param, const Vector& theta,
                   const ActiveSet& active, double delta, const Window& w) {
  if (!(delta > 0.0)) throw std::invalid_argument("complex step must be positive");
  check_window(w, map.grid());
  check_active(active, static_cast<int>(theta.size()));
  Matrix psi(static_cast<Eigen::Index>(map.num_outputs()) * w.count(), active.size());
  for (int c = 0; c < active.size(); ++c) {
    ComplexVector t = theta.cast<Complex>();
    t[active.indices[c]] += Complex(0.0, delta);
    psi.col(c) = stack_window_complex(map.observe(param.nodal(t), w.last), w).imag() / delta;
  }
  return psi;
}

Vector diagonal_scaling(const Subdivision& sub, const ActiveSet& active) {
  Vector d(active.size());
  double longest = 0.0;
  for (int j : active.indices) longest = std::max(longest, sub.segment(j).length());
  for (int c = 0; c < active.size(); ++c) d[c] = longest / sub.segment(active.indices[c]).length();
  return d;
}

TsvdResult tsvd_solve(const Matrix& psi, const Vector& e, const TsvdOptions& opts) {
  if (psi.rows() != e.size()) throw std::invalid_argument("residual length does not match Jacobian rows");
  TsvdResult out;
  out.step = Vector::Zero(psi.cols());
  if (psi.cols() == 0) {
    out.identifiable = false;
    return out;
  }
  Eigen::BDCSVD<Matrix> svd(psi, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.singular_values = svd.singularValues();
  const Vector& s = out.singular_values;
  const double s1 = s.size() ? s[0] : 0.0;
  int r = 0;
  while (r < s.size() && s[r] > 0.0 && s[r] >= opts.rel_tol * s1 &&
         s[r] > opts.abs_tol && (opts.max_rank < 0 || r < opts.max_rank)) {
    ++r;
  }
  out.rank = r;
  if (r == 0) {
    out.identifiable = false;
    return out;
  }
  const Vector coeff = (svd.matrixU().leftCols(r).transpose() * e).cwiseQuotient(s.head(r));
  out.step = svd.matrixV().leftCols(r) * coeff;
  return out;
}

double condition_number(const Matrix& psi) {
  if (psi.cols() == 0 || psi.rows() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(psi);
  const Vector& s = svd.singularValues();
  const double smin = s[s.size() - 1];
  if (!(smin > 0.0) || psi.rows() < psi.cols()) return std::numeric_limits<double>::infinity();
  return s[0] / smin;
}

void write_condition_log_csv(const std::string& path, const std::vector<ConditionLogEntry>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(17) << "iteration,cond,rows,cols\n";
  for (const auto& r : log) out << r.iteration << ',' << r.cond << ',' << r.rows << ',' << r.cols << '\n';
}

}  // namespace cdrinv
