#include "cdrinv/time_localization.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace cdrinv {

SectionPartition::SectionPartition(std::vector<double> xi) : xi_(std::move(xi)) {
  if (xi_.size() < 2) throw std::invalid_argument("partition needs at least one section");
  for (std::size_t i = 1; i < xi_.size(); ++i) {
    if (!(xi_[i] > xi_[i - 1])) throw std::invalid_argument("section breakpoints must be strictly increasing");
  }
}

SectionPartition SectionPartition::from_subdivision(const Subdivision& sub, Edge edge) {
  return SectionPartition(sub.breakpoints(edge));
}

int SectionPartition::section_of(const Segment& s) const {
  const double x = s.midpoint();
  if (x < xi_.front() || x > xi_.back()) return -1;
  const auto it = std::upper_bound(xi_.begin(), xi_.end(), x);
  return std::min(static_cast<int>(it - xi_.begin()) - 1, num_sections() - 1);
}

std::vector<int> SectionPartition::parameters(const Subdivision& sub, int i) const {
  std::vector<int> out;
  for (int k = 0; k < sub.num_segments(); ++k) {
    if (section_of(sub.segment(k)) == i) out.push_back(k);
  }
  return out;
}

Vector rate_of_change(const Vector& c) {
  const Eigen::Index n = c.size();
  Vector r = Vector::Zero(n);
  if (n < 2) return r;
  r[0] = c[1] - c[0];
  r[n - 1] = c[n - 1] - c[n - 2];
  for (Eigen::Index k = 1; k + 1 < n; ++k) r[k] = 0.5 * (c[k + 1] - c[k - 1]);
  return r;
}

ZetaCurves zeta_curves(const ForwardModel& model, const SectionPartition& partition, double finest_step) {
  const Interval span = model.mesh().x_range();
  const Subdivision finest = Subdivision::finest(span, finest_step);
  const Matrix b = nodal_map(finest, model.mesh());
  const Vector c0 = Vector::Zero(model.num_nodes());
  const int ns = partition.num_sections();
  const int steps = model.grid().steps;

  ZetaCurves z;
  z.top.resize(ns, steps);
  z.bottom.resize(ns, steps);
  z.top_rate.resize(ns, steps);
  z.bottom_rate.resize(ns, steps);
  for (int i = 0; i < ns; ++i) {
    for (Edge e : {Edge::top, Edge::bottom}) {
      int probe = -1;
      for (int k = 0; k < finest.num_segments(); ++k) {
        const Segment s = finest.segment(k);
        if (s.edge == e && partition.section_of(s) == i) {
          probe = k;
          break;
        }
      }
      if (probe < 0) {
        throw std::invalid_argument("section " + std::to_string(i + 1) + " contains no finest segment");
      }
      Vector theta = Vector::Zero(finest.num_segments());
      theta[probe] = 1.0;
      const Vector nodal = b * theta;
      const Matrix obs = model.solve_observed(c0, nodal, 0.0);
      Vector mean = obs.colwise().mean().transpose();
      const double peak = mean.cwiseAbs().maxCoeff();
      if (peak > 0.0) mean /= peak;
      (e == Edge::top ? z.top : z.bottom).row(i) = mean.transpose();
      (e == Edge::top ? z.top_rate : z.bottom_rate).row(i) = rate_of_change(mean).transpose();
    }
  }
  return z;
}

namespace {

// Largest and smallest k with rates(i, k) > eps4 and rates(i-1, k) < eps4.
std::pair<int, int> threshold_set(const Matrix& rates, int i, double eps4) {
  int lo = -1, hi = -1;
  for (int k = 0; k < rates.cols(); ++k) {
    const double upstream = i > 0 ? rates(i - 1, k) : 0.0;
    if (rates(i, k) > eps4 && upstream < eps4) {
      if (lo < 0) lo = k;
      hi = k;
    }
  }
  return {lo, hi};
}

}  // namespace

std::vector<Window> select_windows(const Matrix& rates, const WindowOptions& opts) {
  const int ns = static_cast<int>(rates.rows());
  const int last = static_cast<int>(rates.cols()) - 1;
  if (ns < 1) throw std::invalid_argument("no sections");
  if (opts.d < 0 || opts.D < 0) throw std::invalid_argument("d and D must be nonnegative");
  std::vector<Window> w(ns);
  std::vector<std::pair<int, int>> sets(ns);
  for (int i = 0; i < ns; ++i) {
    sets[i] = threshold_set(rates, i, opts.eps4);
    if (sets[i].first < 0 && opts.fallback_to_own_support) {
      Matrix own = rates.row(i);
      sets[i] = threshold_set(own, 0, opts.eps4);
    }
    if (sets[i].first < 0) {
      throw std::runtime_error("section " + std::to_string(i + 1) +
                               ": response threshold never crossed (final time too short?)");
    }
  }
  const int top = ns - 1;
  w[top] = Window{sets[top].first, sets[top].second};
  for (int i = top - 1; i >= 0; --i) {
    w[i].first = w[i + 1].last - opts.d;
    w[i].last = sets[i].second;
    if (i == 0) w[i].last = std::min(w[i + 1].last + opts.D, sets[i].second);
  }
  for (int i = 0; i < ns; ++i) {
    w[i].first = std::clamp(w[i].first, 1, last);
    w[i].last = std::clamp(w[i].last, 1, last);
    if (w[i].last < w[i].first && opts.fallback_to_own_support) {
      w[i].first = std::clamp(sets[i].first, 1, last);
      w[i].last = std::max(w[i].last, w[i].first);
    }
    if (w[i].last < w[i].first) {
      throw std::runtime_error("section " + std::to_string(i + 1) + ": empty time window [" +
                               std::to_string(w[i].first) + ", " + std::to_string(w[i].last) + "]");
    }
  }
  return w;
}

std::vector<Window> select_windows(const ZetaCurves& z, const WindowOptions& opts) {
  const auto a = select_windows(z.top_rate, opts);
  const auto b = select_windows(z.bottom_rate, opts);
  std::vector<Window> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = Window{std::min(a[i].first, b[i].first), std::max(a[i].last, b[i].last)};
  }
  return out;
}

std::vector<int> carry_over(const ControlVector& cv, const std::vector<int>& estimated, double eps3) {
  if (!(eps3 > 0.0)) throw std::invalid_argument("eps3 must be positive");
  std::vector<int> out;
  for (int k : estimated) {
    if (k < 0 || k >= cv.size()) throw std::out_of_range("parameter index out of range");
    if (cv.theta[k] > eps3) out.push_back(k);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void write_zeta_csv(const std::string& path, const TimeGrid& grid, const ZetaCurves& z) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(17) << "t";
  for (Eigen::Index i = 0; i < z.top.rows(); ++i) {
    out << ",zeta_top_" << i + 1 << ",rate_top_" << i + 1 << ",zeta_bottom_" << i + 1 << ",rate_bottom_" << i + 1;
  }
  out << '\n';
  for (Eigen::Index k = 0; k < z.top.cols(); ++k) {
    out << grid.time(static_cast<int>(k));
    for (Eigen::Index i = 0; i < z.top.rows(); ++i) {
      out << ',' << z.top(i, k) << ',' << z.top_rate(i, k) << ',' << z.bottom(i, k) << ',' << z.bottom_rate(i, k);
    }
    out << '\n';
  }
}

void write_windows_csv(const std::string& path, const TimeGrid& grid, const std::vector<Window>& w) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(17) << "section,first_step,last_step,t_first,t_last\n";
  for (std::size_t i = 0; i < w.size(); ++i) {
    out << i + 1 << ',' << w[i].first << ',' << w[i].last << ',' << grid.time(w[i].first) << ','
        << grid.time(w[i].last) << '\n';
  }
}

}  // namespace cdrinv
