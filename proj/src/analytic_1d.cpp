#include "cdrinv/analytic_1d.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace cdrinv {

void Ode1dProblem::validate() const {
  if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
  if (!(u > 0.0)) throw std::invalid_argument("u must be positive");
  if (!(x2 > x1)) throw std::invalid_argument("x2 must exceed x1");
  if (!(h > 0.0)) throw std::invalid_argument("h must be positive");
  if (!(x_m - h > x1) || !(x_m + h < x2)) {
    throw std::invalid_argument("source support [x_m - h, x_m + h] must lie strictly inside (x1, x2)");
  }
  if (!std::isfinite(peclet())) throw std::invalid_argument("Peclet number is not finite");
}

double PiecewiseSolution::operator()(double x) const {
  const Ode1dProblem& p = problem;
  const double k = p.u / p.mu;
  const double a = p.x_m - p.h;
  const double b = p.x_m + p.h;
  if (x < a) return scaled[0] + scaled[1] * std::exp(k * (x - a));
  if (x <= b) return scaled[2] + p.M / p.u * x + scaled[3] * std::exp(k * (x - b));
  return scaled[4] + scaled[5] * std::exp(k * (x - p.x2));
}

double PiecewiseSolution::derivative(double x) const {
  const Ode1dProblem& p = problem;
  const double k = p.u / p.mu;
  const double a = p.x_m - p.h;
  const double b = p.x_m + p.h;
  if (x < a) return k * scaled[1] * std::exp(k * (x - a));
  if (x <= b) return p.M / p.u + k * scaled[3] * std::exp(k * (x - b));
  return k * scaled[5] * std::exp(k * (x - p.x2));
}

PiecewiseSolution solve_closed_form(const Ode1dProblem& p) {
  p.validate();
  const double k = p.u / p.mu;
  const double a = p.x_m - p.h;
  const double b = p.x_m + p.h;
  const double g = p.M / p.u;
  // Unknowns c1, c2', c3, c4', c5, c6' in the shifted basis; every exponent is <= 0.
  Eigen::Matrix<double, 6, 6> A = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> r = Eigen::Matrix<double, 6, 1>::Zero();
  A(0, 0) = 1.0;
  A(0, 1) = std::exp(k * (p.x1 - a));
  r(0) = p.c_up;
  A(1, 5) = k;
  A(2, 0) = 1.0;
  A(2, 1) = 1.0;
  A(2, 2) = -1.0;
  A(2, 3) = -std::exp(k * (a - b));
  r(2) = g * a;
  A(3, 1) = k;
  A(3, 3) = -k * std::exp(k * (a - b));
  r(3) = g;
  A(4, 2) = 1.0;
  A(4, 3) = 1.0;
  A(4, 4) = -1.0;
  A(4, 5) = -std::exp(k * (b - p.x2));
  r(4) = -g * b;
  A(5, 3) = k;
  A(5, 5) = -k * std::exp(k * (b - p.x2));
  r(5) = -g;
  const Eigen::Matrix<double, 6, 1> s = A.fullPivLu().solve(r);

  PiecewiseSolution out;
  out.problem = p;
  for (int i = 0; i < 6; ++i) out.scaled[i] = s(i);
  out.c = {s(0), s(1) * std::exp(-k * a), s(2), s(3) * std::exp(-k * b), s(4), s(5) * std::exp(-k * p.x2)};
  return out;
}

double c5_formula(const Ode1dProblem& p) {
  const double u = p.u;
  const double mu = p.mu;
  const double M = p.M;
  const double h = p.h;
  const double b = p.x_m + p.h - p.x1;
  // exp(-u b / mu) (2 u h M exp(u b / mu) + mu M (1 - exp(2 u h / mu))) / u^2, expanded to avoid overflow
  return p.c_up + (2.0 * u * h * M + mu * M * (std::exp(-u * b / mu) - std::exp(-u * (b - 2.0 * h) / mu))) / (u * u);
}

namespace {

std::vector<double> fd_grid(const Ode1dProblem& p, int cells) {
  const double pts[4] = {p.x1, p.x_m - p.h, p.x_m + p.h, p.x2};
  std::vector<double> x;
  x.reserve(3 * cells + 1);
  for (int piece = 0; piece < 3; ++piece) {
    const double lo = pts[piece];
    const double hi = pts[piece + 1];
    for (int i = 0; i < cells; ++i) x.push_back(lo + (hi - lo) * i / cells);
  }
  x.push_back(p.x2);
  return x;
}

std::vector<double> fd_solve(const Ode1dProblem& p, const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  const double a = p.x_m - p.h;
  const double b = p.x_m + p.h;
  std::vector<Eigen::Triplet<double>> t;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  t.emplace_back(0, 0, 1.0);
  rhs(0) = p.c_up;
  for (int i = 1; i < n - 1; ++i) {
    const double hl = x[i] - x[i - 1];
    const double hr = x[i + 1] - x[i];
    const double s = hl * hr * (hl + hr);
    // -mu C'' + u C' with the three-point nonuniform stencils
    const double d2l = 2.0 * hr / s, d2c = -2.0 * (hl + hr) / s, d2r = 2.0 * hl / s;
    const double d1l = -hr * hr / s, d1c = (hr * hr - hl * hl) / s, d1r = hl * hl / s;
    t.emplace_back(i, i - 1, -p.mu * d2l + p.u * d1l);
    t.emplace_back(i, i, -p.mu * d2c + p.u * d1c);
    t.emplace_back(i, i + 1, -p.mu * d2r + p.u * d1r);
    // At the jumps, f averaged over the node's dual cell.
    if (std::abs(x[i] - a) < 1e-14) {
      rhs(i) = p.M * hr / (hl + hr);
    } else if (std::abs(x[i] - b) < 1e-14) {
      rhs(i) = p.M * hl / (hl + hr);
    } else if (x[i] > a && x[i] < b) {
      rhs(i) = p.M;
    }
  }
  // Ghost node C_{n} = C_{n-2} for C'(x2) = 0.
  const double hN = x[n - 1] - x[n - 2];
  t.emplace_back(n - 1, n - 2, -2.0 * p.mu / (hN * hN));
  t.emplace_back(n - 1, n - 1, 2.0 * p.mu / (hN * hN));
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(A);
  if (lu.info() != Eigen::Success) throw std::runtime_error("finite-difference system is singular");
  const Eigen::VectorXd c = lu.solve(rhs);
  return {c.data(), c.data() + n};
}

}  // namespace

FdSolution fd_bvp_solve(const Ode1dProblem& p, int cells) {
  p.validate();
  if (cells < 2) throw std::invalid_argument("need at least two cells per piece");
  FdSolution out;
  out.x = fd_grid(p, cells);
  const std::vector<double> coarse = fd_solve(p, out.x);
  const std::vector<double> fine = fd_solve(p, fd_grid(p, 2 * cells));
  out.C.resize(coarse.size());
  for (std::size_t i = 0; i < coarse.size(); ++i) out.C[i] = (4.0 * fine[2 * i] - coarse[i]) / 3.0;
  return out;
}

FlatnessStats flatness_study(const Ode1dProblem& base, double xm_lo, double xm_hi, int points) {
  if (points < 2) throw std::invalid_argument("need at least two x_m values");
  FlatnessStats s;
  for (int i = 0; i < points; ++i) {
    Ode1dProblem p = base;
    p.x_m = xm_lo + (xm_hi - xm_lo) * i / (points - 1);
    s.x_m.push_back(p.x_m);
    s.c1.push_back(solve_closed_form(p)(p.x2));
  }
  s.min = *std::min_element(s.c1.begin(), s.c1.end());
  s.max = *std::max_element(s.c1.begin(), s.c1.end());
  s.relative_spread = s.max != 0.0 ? (s.max - s.min) / std::abs(s.max) : 0.0;
  return s;
}

std::vector<PecletPoint> peclet_sweep(const Ode1dProblem& base, double xm_lo, double xm_hi, int points,
                                      int levels) {
  std::vector<PecletPoint> out;
  Ode1dProblem p = base;
  for (int j = 0; j < levels; ++j) {
    out.push_back({p.peclet(), flatness_study(p, xm_lo, xm_hi, points).relative_spread});
    p.u *= 2.0;
  }
  return out;
}

double linearity_r2(const Ode1dProblem& base, const std::vector<double>& M_values) {
  const int n = static_cast<int>(M_values.size());
  if (n < 3) throw std::invalid_argument("need at least three M values");
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    Ode1dProblem p = base;
    p.M = M_values[i];
    X(i, 0) = 1.0;
    X(i, 1) = p.M;
    y(i) = solve_closed_form(p)(p.x2);
  }
  const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(y);
  const double ss_res = (y - X * beta).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).matrix().squaredNorm();
  return ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
}

void write_c1_surface_csv(const std::string& path, const Ode1dProblem& base, const std::vector<double>& h_values,
                          const std::vector<double>& xm_values) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(17) << "h,x_m,c1\n";
  for (double h : h_values) {
    for (double xm : xm_values) {
      Ode1dProblem p = base;
      p.h = h;
      p.x_m = xm;
      if (!(xm - h > p.x1) || !(xm + h < p.x2)) continue;
      out << h << ',' << xm << ',' << solve_closed_form(p)(p.x2) << '\n';
    }
  }
}

}  // namespace cdrinv
