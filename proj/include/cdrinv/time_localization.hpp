#pragma once

#include <string>
#include <vector>

#include "cdrinv/sensitivity.hpp"

namespace cdrinv {

/// Vertical strips [xi_j, xi_{j+1}] x [y1, y2] of the domain.
class SectionPartition {
 public:
  explicit SectionPartition(std::vector<double> xi);
  static SectionPartition from_subdivision(const Subdivision& sub, Edge edge = Edge::top);

  int num_sections() const { return static_cast<int>(xi_.size()) - 1; }
  const std::vector<double>& breakpoints() const { return xi_; }
  Interval section(int i) const { return {xi_.at(i), xi_.at(i + 1)}; }
  /// Section containing the segment midpoint (last section is closed on the right).
  int section_of(const Segment& s) const;
  /// Indices of `sub` segments (both edges) lying in section i.
  std::vector<int> parameters(const Subdivision& sub, int i) const;

 private:
  std::vector<double> xi_;
};

/// Mean outflow response to a unit probe on the leftmost finest segment of each section.
struct ZetaCurves {
  Matrix top;       // n_s x N, normalized to peak 1
  Matrix bottom;    // same for probes on the bottom edge
  Matrix top_rate;  // centered differences per time step
  Matrix bottom_rate;
};

/// Probes start from zero state with no upstream inflow.
ZetaCurves zeta_curves(const ForwardModel& model, const SectionPartition& partition, double finest_step);

/// Centered differences per step (one-sided at the ends).
Vector rate_of_change(const Vector& curve);

struct WindowOptions {
  double eps4 = 1e-2;  // per-step rate of the peak-normalized curve
  int d = 5;   // overlap, in steps
  int D = 40;  // cap on the first window past the second one, in steps
  // When a section's threshold set is empty (its upstream neighbour rises no
  // later than it does), use the section's own transitional support instead
  // of failing. Needed for fine partitions near the inflow.
  bool fallback_to_own_support = false;
};

/// Windows per section (index 0 = most upstream) from derivative curves.
/// Throws when some section's threshold set is empty.
std::vector<Window> select_windows(const Matrix& rates, const WindowOptions& opts);
/// Hull of the top-probe and bottom-probe windows of each section.
std::vector<Window> select_windows(const ZetaCurves& z, const WindowOptions& opts);

/// Indices from `estimated` whose values exceed eps3.
std::vector<int> carry_over(const ControlVector& cv, const std::vector<int>& estimated, double eps3);

void write_zeta_csv(const std::string& path, const TimeGrid& grid, const ZetaCurves& z);
void write_windows_csv(const std::string& path, const TimeGrid& grid, const std::vector<Window>& w);

}  // namespace cdrinv
