#include "cdrinv/control_param.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cdrinv {

namespace {

constexpr double kGridTol = 1e-9;

bool near(double a, double b) { return std::abs(a - b) <= kGridTol * std::max(1.0, std::abs(b)); }

void check_edge(const std::vector<double>& pts, Interval span, const char* name) {
  if (pts.size() < 2) throw std::invalid_argument(std::string(name) + " edge needs at least one segment");
  if (!near(pts.front(), span.lo) || !near(pts.back(), span.hi)) {
    throw std::invalid_argument(std::string(name) + " breakpoints must span the whole edge");
  }
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (!(pts[i] > pts[i - 1])) {
      throw std::invalid_argument(std::string(name) + " breakpoints must be strictly increasing");
    }
  }
}

double truth_value(const std::vector<SourceSpec>& truth, Edge e, double x) {
  double v = 0.0;
  for (const auto& s : truth) {
    if (s.edge == e && x >= s.span.lo && x < s.span.hi) v += s.value;
  }
  return v;
}

}  // namespace

const char* edge_name(Edge e) { return e == Edge::top ? "top" : "bottom"; }

Subdivision::Subdivision(Interval span, double finest_step, std::vector<double> top,
                         std::vector<double> bottom)
    : span_(span), finest_step_(finest_step), top_(std::move(top)), bottom_(std::move(bottom)) {
  if (!(span.hi > span.lo)) throw std::invalid_argument("subdivision span is degenerate");
  if (!(finest_step > 0.0)) throw std::invalid_argument("finest step must be positive");
  const double cells = span.length() / finest_step;
  if (std::abs(cells - std::round(cells)) > kGridTol * std::max(1.0, cells)) {
    throw std::invalid_argument("finest step does not divide the edge length");
  }
  check_edge(top_, span, "top");
  check_edge(bottom_, span, "bottom");
  for (const auto* pts : {&top_, &bottom_}) {
    for (double x : *pts) {
      if (!on_finest_grid(x)) {
        throw std::invalid_argument("breakpoint " + std::to_string(x) + " is not on the finest grid");
      }
    }
  }
  // Snap ends so that locate() is exact at the span boundary.
  top_.front() = bottom_.front() = span.lo;
  top_.back() = bottom_.back() = span.hi;
}

Subdivision Subdivision::uniform(Interval span, double finest_step, int segments_per_edge) {
  if (segments_per_edge < 1) throw std::invalid_argument("need at least one segment per edge");
  std::vector<double> pts(segments_per_edge + 1);
  for (int i = 0; i <= segments_per_edge; ++i) {
    pts[i] = span.lo + span.length() * i / segments_per_edge;
  }
  return Subdivision(span, finest_step, pts, pts);
}

Subdivision Subdivision::finest(Interval span, double finest_step) {
  const int n = static_cast<int>(std::lround(span.length() / finest_step));
  return uniform(span, finest_step, n);
}

bool Subdivision::on_finest_grid(double x) const {
  const double r = (x - span_.lo) / finest_step_;
  return std::abs(r - std::round(r)) <= 1e-7;
}

Segment Subdivision::segment(int index) const {
  if (index < 0 || index >= num_segments()) {
    throw std::out_of_range("segment index " + std::to_string(index) + " out of range");
  }
  const int nt = num_segments(Edge::top);
  if (index < nt) return Segment{Edge::top, top_[index], top_[index + 1]};
  const int b = index - nt;
  return Segment{Edge::bottom, bottom_[b], bottom_[b + 1]};
}

std::vector<Segment> Subdivision::segments() const {
  std::vector<Segment> out;
  out.reserve(num_segments());
  for (int i = 0; i < num_segments(); ++i) out.push_back(segment(i));
  return out;
}

int Subdivision::locate(Edge e, double x) const {
  const auto& pts = breakpoints(e);
  if (x < pts.front() || x >= pts.back()) return -1;
  const auto it = std::upper_bound(pts.begin(), pts.end(), x);
  const int local = static_cast<int>(it - pts.begin()) - 1;
  return e == Edge::top ? local : num_segments(Edge::top) + local;
}

bool Subdivision::at_finest_width(int index) const {
  return segment(index).length() <= finest_step_ * (1.0 + 1e-7);
}

std::optional<Subdivision> Subdivision::bisect(int index) const {
  const Segment s = segment(index);
  if (at_finest_width(index)) return std::nullopt;
  double mid = s.midpoint();
  // Keep the new breakpoint on the finest grid when the width is an odd multiple of the step.
  const double k = std::floor((mid - span_.lo) / finest_step_ + 1e-9);
  mid = span_.lo + k * finest_step_;
  if (!(mid > s.lo)) mid = s.lo + finest_step_;
  auto top = top_;
  auto bottom = bottom_;
  auto& pts = s.edge == Edge::top ? top : bottom;
  pts.insert(std::upper_bound(pts.begin(), pts.end(), mid), mid);
  return Subdivision(span_, finest_step_, std::move(top), std::move(bottom));
}

bool Subdivision::operator==(const Subdivision& other) const {
  auto same = [](const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!near(a[i], b[i])) return false;
    }
    return true;
  };
  return near(span_.lo, other.span_.lo) && near(span_.hi, other.span_.hi) &&
         near(finest_step_, other.finest_step_) && same(top_, other.top_) && same(bottom_, other.bottom_);
}

ControlVector::ControlVector(Subdivision s, Vector t) : sub(std::move(s)), theta(std::move(t)) {
  if (theta.size() != sub.num_segments()) {
    throw std::invalid_argument("control vector length " + std::to_string(theta.size()) +
                                " does not match segment count " + std::to_string(sub.num_segments()));
  }
  if ((theta.array() < 0.0).any()) throw std::invalid_argument("control values must be nonnegative");
}

ControlVector ControlVector::zeros(Subdivision s) {
  const int n = s.num_segments();
  return ControlVector(std::move(s), Vector::Zero(n));
}

ActiveSet ActiveSet::all(int n) {
  ActiveSet a;
  a.indices.resize(n);
  std::iota(a.indices.begin(), a.indices.end(), 0);
  return a;
}

bool ActiveSet::contains(int i) const {
  return std::find(indices.begin(), indices.end(), i) != indices.end();
}

Matrix nodal_map(const Subdivision& sub, const StructuredMesh& mesh) {
  const auto top = mesh.top_nodes();
  const auto bottom = mesh.bottom_nodes();
  Matrix b = Matrix::Zero(static_cast<Eigen::Index>(top.size() + bottom.size()), sub.num_segments());
  std::vector<int> hits(sub.num_segments(), 0);
  int row = 0;
  for (const auto& [edge, nodes] : {std::pair{Edge::top, &top}, std::pair{Edge::bottom, &bottom}}) {
    for (int node : *nodes) {
      const double x = mesh.nodes()[node].x;
      const int seg = sub.locate(edge, x + 1e-12 * sub.span().length());
      if (seg >= 0) {
        b(row, seg) = 1.0;
        ++hits[seg];
      }
      ++row;
    }
  }
  for (int s = 0; s < sub.num_segments(); ++s) {
    if (hits[s] == 0) {
      const Segment seg = sub.segment(s);
      throw std::invalid_argument("subdivision misaligned with mesh: segment [" + std::to_string(seg.lo) +
                                  ", " + std::to_string(seg.hi) + ") on the " + edge_name(seg.edge) +
                                  " edge contains no mesh node");
    }
  }
  return b;
}

Vector to_nodal_control(const ControlVector& cv, const StructuredMesh& mesh) {
  return nodal_map(cv.sub, mesh) * cv.theta;
}

BisectResult bisect(const ControlVector& cv, int index) {
  auto refined = cv.sub.bisect(index);
  if (!refined) return BisectResult{cv, false};
  Vector theta(cv.size() + 1);
  theta.head(index + 1) = cv.theta.head(index + 1);
  theta[index + 1] = cv.theta[index];
  theta.tail(cv.size() - index - 1) = cv.theta.tail(cv.size() - index - 1);
  return BisectResult{ControlVector(std::move(*refined), std::move(theta)), true};
}

Refinement refine_by_threshold(const ControlVector& cv, double eps1, int cap, const std::vector<int>* allowed) {
  std::vector<int> candidates;
  for (int i = 0; i < cv.size(); ++i) {
    if (allowed && std::find(allowed->begin(), allowed->end(), i) == allowed->end()) continue;
    if (cv.theta[i] > eps1 && !cv.sub.at_finest_width(i)) candidates.push_back(i);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](int a, int b) { return cv.theta[a] > cv.theta[b]; });
  if (cap > 0 && static_cast<int>(candidates.size()) > cap) candidates.resize(cap);
  std::sort(candidates.begin(), candidates.end());

  Refinement r{cv, {}, 0};
  r.children.resize(cv.size());
  // Bisect from the right so earlier indices stay valid.
  for (auto it = candidates.rbegin(); it != candidates.rend(); ++it) {
    auto res = bisect(r.cv, *it);
    if (res.refined) {
      r.cv = std::move(res.cv);
      ++r.bisected;
    }
  }
  int next = 0;
  for (int i = 0; i < cv.size(); ++i) {
    const bool split = std::binary_search(candidates.begin(), candidates.end(), i);
    r.children[i].push_back(next++);
    if (split) r.children[i].push_back(next++);
  }
  return r;
}

std::vector<int> remap_indices(const std::vector<int>& indices, const Refinement& r) {
  std::vector<int> out;
  for (int i : indices) {
    if (i < 0 || i >= static_cast<int>(r.children.size())) throw std::out_of_range("index out of range");
    out.insert(out.end(), r.children[i].begin(), r.children[i].end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ActiveSet select_active(const ControlVector& cv, double eps2) {
  ActiveSet a;
  for (int i = 0; i < cv.size(); ++i) {
    if (cv.theta[i] > eps2) a.indices.push_back(i);
  }
  return a;
}

namespace {

void check_truth(const std::vector<SourceSpec>& truth, Interval span, double finest_step) {
  for (const auto& s : truth) {
    auto on_grid = [&](double x) {
      const double r = (x - span.lo) / finest_step;
      return std::abs(r - std::round(r)) <= 1e-7;
    };
    if (!(s.span.hi > s.span.lo) || s.span.lo < span.lo - kGridTol || s.span.hi > span.hi + kGridTol) {
      throw std::invalid_argument("source interval outside the horizontal edge");
    }
    if (!on_grid(s.span.lo) || !on_grid(s.span.hi)) {
      throw std::invalid_argument("source interval [" + std::to_string(s.span.lo) + ", " +
                                  std::to_string(s.span.hi) + ") is not representable on the finest grid");
    }
    if (s.value < 0.0) throw std::invalid_argument("source value must be nonnegative");
  }
}

}  // namespace

ControlVector truth_on_finest(const std::vector<SourceSpec>& truth, Interval span, double finest_step) {
  check_truth(truth, span, finest_step);
  auto cv = ControlVector::zeros(Subdivision::finest(span, finest_step));
  for (int i = 0; i < cv.size(); ++i) {
    const Segment s = cv.sub.segment(i);
    cv.theta[i] = truth_value(truth, s.edge, s.midpoint());
  }
  return cv;
}

Subdivision optimal_subdivision(const Subdivision& initial, const std::vector<SourceSpec>& truth) {
  check_truth(truth, initial.span(), initial.finest_step());
  const double h = initial.finest_step();
  auto constant_on = [&](const Segment& s) {
    const double v0 = truth_value(truth, s.edge, s.lo + 0.5 * h);
    for (double x = s.lo + 0.5 * h; x < s.hi; x += h) {
      if (truth_value(truth, s.edge, x) != v0) return false;
    }
    return true;
  };
  Subdivision sub = initial;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int i = sub.num_segments() - 1; i >= 0; --i) {
      if (!constant_on(sub.segment(i))) {
        auto next = sub.bisect(i);
        if (!next) throw std::logic_error("true profile not constant on a finest segment");
        sub = std::move(*next);
        changed = true;
      }
    }
  }
  return sub;
}

EdgePair distance_from_optimal(const Subdivision& estimated, const Subdivision& initial,
                               const std::vector<SourceSpec>& truth) {
  const Subdivision opt = optimal_subdivision(initial, truth);
  EdgePair d;
  d.top = static_cast<double>(estimated.breakpoints(Edge::top).size()) -
          static_cast<double>(opt.breakpoints(Edge::top).size());
  d.bottom = static_cast<double>(estimated.breakpoints(Edge::bottom).size()) -
             static_cast<double>(opt.breakpoints(Edge::bottom).size());
  return d;
}

EdgePair l1_error(const ControlVector& estimate, const std::vector<SourceSpec>& truth) {
  const Interval span = estimate.sub.span();
  const double h = estimate.sub.finest_step();
  check_truth(truth, span, h);
  EdgePair err;
  const int cells = static_cast<int>(std::lround(span.length() / h));
  for (Edge e : {Edge::top, Edge::bottom}) {
    double acc = 0.0;
    for (int c = 0; c < cells; ++c) {
      const double x = span.lo + (c + 0.5) * h;
      const int seg = estimate.sub.locate(e, x);
      acc += std::abs(estimate.theta[seg] - truth_value(truth, e, x)) * h;
    }
    (e == Edge::top ? err.top : err.bottom) = acc;
  }
  return err;
}

ControlVector known_location_control(const std::vector<SourceSpec>& truth, Interval span,
                                     double finest_step, bool zero_values) {
  check_truth(truth, span, finest_step);
  std::vector<double> pts[2] = {{span.lo, span.hi}, {span.lo, span.hi}};
  for (const auto& s : truth) {
    auto& p = pts[s.edge == Edge::top ? 0 : 1];
    p.push_back(s.span.lo);
    p.push_back(s.span.hi);
  }
  for (auto& p : pts) {
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end(), [](double a, double b) { return near(a, b); }), p.end());
  }
  Subdivision sub(span, finest_step, pts[0], pts[1]);
  auto cv = ControlVector::zeros(std::move(sub));
  if (!zero_values) {
    for (int i = 0; i < cv.size(); ++i) {
      const Segment s = cv.sub.segment(i);
      cv.theta[i] = truth_value(truth, s.edge, s.midpoint());
    }
  }
  return cv;
}

ActiveSet source_segments(const ControlVector& cv, const std::vector<SourceSpec>& truth) {
  ActiveSet a;
  for (int i = 0; i < cv.size(); ++i) {
    const Segment s = cv.sub.segment(i);
    for (const auto& t : truth) {
      if (t.edge == s.edge && s.lo >= t.span.lo - kGridTol && s.hi <= t.span.hi + kGridTol) {
        a.indices.push_back(i);
        break;
      }
    }
  }
  return a;
}

void write_subdivision_csv(const std::string& path, const ControlVector& cv) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(17);
  out << "kind,edge,values\n";
  for (Edge e : {Edge::top, Edge::bottom}) {
    out << "breakpoints," << edge_name(e);
    for (double x : cv.sub.breakpoints(e)) out << ',' << x;
    out << '\n';
  }
  for (Edge e : {Edge::top, Edge::bottom}) {
    out << "theta," << edge_name(e);
    for (int i = 0; i < cv.size(); ++i) {
      if (cv.sub.segment(i).edge == e) out << ',' << cv.theta[i];
    }
    out << '\n';
  }
}

}  // namespace cdrinv
