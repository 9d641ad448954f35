#pragma once

#include <array>
#include <string>
#include <vector>

namespace cdrinv {

/// -mu C'' + u C' = f on (x1, x2), C(x1) = c_up, C'(x2) = 0, with f = M on
/// |x - x_m| <= h and 0 elsewhere.
struct Ode1dProblem {
  double mu = 0.5;
  double u = 10.0;
  double x1 = 0.0;
  double x2 = 1.0;
  double c_up = 0.0;
  double M = 1.0;
  double x_m = 0.5;
  double h = 0.1;

  double peclet() const { return u / (2.0 * mu); }
  void validate() const;
};

/// C = c1 + c2 e^{kx} left of the source, c3 + (M/u) x + c4 e^{kx} on it,
/// c5 + c6 e^{kx} right of it, k = u / mu.
struct PiecewiseSolution {
  Ode1dProblem problem;
  std::array<double, 6> c{};
  // Same solution with each exponential shifted to its piece's right end:
  // c2 e^{k(x - a)}, c4 e^{k(x - b)}, c6 e^{k(x - x2)}, a = x_m - h, b = x_m + h.
  std::array<double, 6> scaled{};

  double operator()(double x) const;
  double derivative(double x) const;
};

/// Coefficients from the 2 boundary and 4 interface conditions.
PiecewiseSolution solve_closed_form(const Ode1dProblem& p);

/// c5 for x1 = 0, x2 = 1 as printed for c_up = 0, shifted by c_up.
double c5_formula(const Ode1dProblem& p);

struct FdSolution {
  std::vector<double> x;
  std::vector<double> C;
};

/// Second-order finite differences on a grid with nodes at x_m +- h, refined
/// once and Richardson-extrapolated onto the coarse nodes. `cells` is per piece.
FdSolution fd_bvp_solve(const Ode1dProblem& p, int cells = 2000);

struct FlatnessStats {
  double min = 0.0;
  double max = 0.0;
  double relative_spread = 0.0;  // (max - min) / max
  std::vector<double> x_m;
  std::vector<double> c1;
};

/// C(1) over an x_m grid at fixed M, h.
FlatnessStats flatness_study(const Ode1dProblem& base, double xm_lo, double xm_hi, int points);

struct PecletPoint {
  double peclet = 0.0;
  double relative_spread = 0.0;
};

/// Spreads for u scaled by 2^j, j = 0..levels-1.
std::vector<PecletPoint> peclet_sweep(const Ode1dProblem& base, double xm_lo, double xm_hi, int points,
                                      int levels);

/// Least-squares R^2 of C(1) against M.
double linearity_r2(const Ode1dProblem& base, const std::vector<double>& M_values);

/// Rows h, x_m, C(1) over the grid, skipping pairs whose support leaves (x1, x2).
void write_c1_surface_csv(const std::string& path, const Ode1dProblem& base, const std::vector<double>& h_values,
                          const std::vector<double>& xm_values);

}  // namespace cdrinv
