#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cdrinv/mesh_fem.hpp"

namespace cdrinv {

enum class Edge { top, bottom };

const char* edge_name(Edge e);

struct Segment {
  Edge edge = Edge::top;
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  double midpoint() const { return 0.5 * (lo + hi); }
};

/// Piecewise-constant parametrization of the two horizontal edges.
///
/// Each edge carries its own strictly increasing breakpoint list spanning the
/// whole edge. Every breakpoint lies on the finest reference grid of step
/// `finest_step`, so bisection can never go below that width. Segments are
/// indexed top edge left to right, then bottom edge left to right.
class Subdivision {
 public:
  Subdivision(Interval span, double finest_step, std::vector<double> top, std::vector<double> bottom);

  static Subdivision uniform(Interval span, double finest_step, int segments_per_edge);
  static Subdivision finest(Interval span, double finest_step);

  Interval span() const { return span_; }
  double finest_step() const { return finest_step_; }
  const std::vector<double>& breakpoints(Edge e) const { return e == Edge::top ? top_ : bottom_; }

  int num_segments(Edge e) const { return static_cast<int>(breakpoints(e).size()) - 1; }
  int num_segments() const { return num_segments(Edge::top) + num_segments(Edge::bottom); }
  Segment segment(int index) const;
  std::vector<Segment> segments() const;
  // Global index of the segment on edge `e` that contains x in [lo, hi); -1 outside.
  int locate(Edge e, double x) const;

  bool at_finest_width(int index) const;
  /// Midpoint insertion; nullopt when the segment is already at the finest width.
  std::optional<Subdivision> bisect(int index) const;

  bool operator==(const Subdivision& other) const;

 private:
  bool on_finest_grid(double x) const;

  Interval span_;
  double finest_step_;
  std::vector<double> top_;
  std::vector<double> bottom_;
};

struct ControlVector {
  Subdivision sub;
  Vector theta;

  ControlVector(Subdivision s, Vector t);
  static ControlVector zeros(Subdivision s);
  int size() const { return static_cast<int>(theta.size()); }
};

struct ActiveSet {
  std::vector<int> indices;

  static ActiveSet all(int n);
  int size() const { return static_cast<int>(indices.size()); }
  bool contains(int i) const;
};

/// Linear map from segment values to horizontal nodal values
/// (rows follow StructuredMesh::horizontal_nodes()).
Matrix nodal_map(const Subdivision& sub, const StructuredMesh& mesh);
Vector to_nodal_control(const ControlVector& cv, const StructuredMesh& mesh);

struct BisectResult {
  ControlVector cv;
  bool refined = false;
};

/// Children inherit the parent value.
BisectResult bisect(const ControlVector& cv, int index);

struct Refinement {
  ControlVector cv;
  // children[i] lists the new indices that replace old segment i.
  std::vector<std::vector<int>> children;
  int bisected = 0;
};

/// Bisects segments with theta > eps1, largest values first, at most `cap`
/// of them (cap <= 0 means no limit), never below the finest width. When
/// `allowed` is given only those indices are candidates.
Refinement refine_by_threshold(const ControlVector& cv, double eps1, int cap = 4,
                               const std::vector<int>* allowed = nullptr);

/// Maps an index set through a refinement (children inherit membership).
std::vector<int> remap_indices(const std::vector<int>& indices, const Refinement& r);

ActiveSet select_active(const ControlVector& cv, double eps2);

/// Ground-truth source: constant value on [span.lo, span.hi) of one edge.
struct SourceSpec {
  Edge edge = Edge::top;
  Interval span;
  double value = 0.0;
};

/// Truth sampled on the finest grid, as a control vector.
ControlVector truth_on_finest(const std::vector<SourceSpec>& truth, Interval span, double finest_step);

/// Smallest subdivision reachable from `initial` by bisection on which the
/// true profile is piecewise constant.
Subdivision optimal_subdivision(const Subdivision& initial, const std::vector<SourceSpec>& truth);

struct EdgePair {
  double top = 0.0;
  double bottom = 0.0;
};

/// Signed breakpoint-count difference (estimated minus optimal) per edge.
EdgePair distance_from_optimal(const Subdivision& estimated, const Subdivision& initial,
                               const std::vector<SourceSpec>& truth);

/// Length-weighted L1 mismatch per edge, evaluated on the finest grid.
EdgePair l1_error(const ControlVector& estimate, const std::vector<SourceSpec>& truth);

/// Subdivision whose segments are exactly the source intervals plus the gaps
/// between them (known-location problems), with the matching control vector.
ControlVector known_location_control(const std::vector<SourceSpec>& truth, Interval span,
                                     double finest_step, bool zero_values);
/// Indices of segments of `cv` that carry a source in `truth`.
ActiveSet source_segments(const ControlVector& cv, const std::vector<SourceSpec>& truth);

/// CSV rows: edge, breakpoints; then edge, values.
void write_subdivision_csv(const std::string& path, const ControlVector& cv);

}  // namespace cdrinv
