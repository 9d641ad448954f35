#include <doctest.h>

#include "cdrinv/control_param.hpp"

using namespace cdrinv;

namespace {

const Interval kEdge{0.0, 8.0};

Subdivision top_only(std::vector<double> top, double finest = 0.5) {
  return Subdivision(kEdge, finest, std::move(top), {0.0, 8.0});
}

ControlVector with_theta(Subdivision s, std::vector<double> values) {
  return ControlVector(std::move(s), Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
}

}  // namespace

TEST_CASE("subdivision invariants") {
  CHECK_THROWS(Subdivision(kEdge, 0.5, {0.0, 4.25, 8.0}, {0.0, 8.0}));  // off the finest grid
  CHECK_THROWS(Subdivision(kEdge, 0.5, {0.0, 4.0, 4.0, 8.0}, {0.0, 8.0}));
  CHECK_THROWS(Subdivision(kEdge, 0.5, {0.5, 8.0}, {0.0, 8.0}));
  CHECK_THROWS(Subdivision(kEdge, 0.3, {0.0, 8.0}, {0.0, 8.0}));
  CHECK_THROWS(Subdivision(kEdge, 0.5, {0.0}, {0.0, 8.0}));

  const Subdivision s = Subdivision::uniform(kEdge, 0.5, 4);
  CHECK(s.num_segments() == 8);
  CHECK(s.segment(5).edge == Edge::bottom);
  CHECK(s.segment(5).lo == doctest::Approx(2.0));
  CHECK(s.locate(Edge::top, 3.99) == 1);
  CHECK(s.locate(Edge::top, 4.0) == 2);
  CHECK(s.locate(Edge::bottom, 7.99) == 7);
  CHECK(Subdivision::finest(kEdge, 0.5).num_segments() == 32);
}

TEST_CASE("bisection") {
  const Subdivision s = top_only({0.0, 4.0, 5.0, 8.0});
  const auto b = s.bisect(1);
  REQUIRE(b);
  CHECK(b->breakpoints(Edge::top) == std::vector<double>{0.0, 4.0, 4.5, 5.0, 8.0});
  CHECK(b->breakpoints(Edge::bottom) == s.breakpoints(Edge::bottom));

  const Subdivision fine = top_only({0.0, 4.0, 4.5, 8.0});
  CHECK(fine.at_finest_width(1));
  CHECK_FALSE(fine.bisect(1));

  const BisectResult r = bisect(with_theta(s, {0.0, 100.0, 0.0, 7.0}), 1);
  CHECK(r.refined);
  CHECK(r.cv.size() == 5);
  CHECK(r.cv.theta[1] == 100.0);
  CHECK(r.cv.theta[2] == 100.0);
  CHECK(r.cv.theta[4] == 7.0);

  const BisectResult noop = bisect(with_theta(fine, {0.0, 100.0, 0.0, 0.0}), 1);
  CHECK_FALSE(noop.refined);
  CHECK(noop.cv.sub == fine);
}

TEST_CASE("refine by threshold") {
  const ControlVector cv = with_theta(top_only({0.0, 2.0, 4.0, 6.0, 8.0}), {100.0, 0.1, 50.0, 0.0, 0.0});
  const Refinement r = refine_by_threshold(cv, 0.4);
  CHECK(r.bisected == 2);
  CHECK(r.cv.size() == cv.size() + 2);
  CHECK(r.cv.sub.breakpoints(Edge::top) == std::vector<double>{0.0, 1.0, 2.0, 4.0, 5.0, 6.0, 8.0});
  CHECK(r.children[0] == std::vector<int>{0, 1});
  CHECK(r.children[1] == std::vector<int>{2});
  CHECK(r.children[2] == std::vector<int>{3, 4});
  CHECK(remap_indices({1, 2}, r) == std::vector<int>{2, 3, 4});

  const Refinement none = refine_by_threshold(with_theta(top_only({0.0, 4.0, 8.0}), {0.4, 0.1, 0.0}), 0.4);
  CHECK(none.bisected == 0);
  CHECK(none.cv.sub == top_only({0.0, 4.0, 8.0}));

  // floor rule
  const Refinement floor = refine_by_threshold(with_theta(top_only({0.0, 4.0, 4.5, 8.0}), {0.0, 9.0, 0.0, 0.0}), 0.4);
  CHECK(floor.bisected == 0);
}

TEST_CASE("refinement cap keeps the largest values") {
  const ControlVector cv =
      with_theta(top_only({0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0}), {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 0.0});
  const Refinement r = refine_by_threshold(cv, 0.4, 2);
  CHECK(r.bisected == 2);
  CHECK(r.children[5].size() == 2);
  CHECK(r.children[6].size() == 2);
  CHECK(r.children[4].size() == 1);

  const std::vector<int> allowed = {0, 1};
  const Refinement only = refine_by_threshold(cv, 0.4, 0, &allowed);
  CHECK(only.bisected == 2);
  CHECK(only.children[0].size() == 2);
  CHECK(only.children[6].size() == 1);
}

TEST_CASE("active set selection") {
  const Subdivision s = top_only({0.0, 2.0, 4.0, 8.0});
  CHECK(select_active(with_theta(s, {100.0, 0.2, 80.0, 0.0}), 0.4).indices == std::vector<int>{0, 2});
  CHECK(select_active(ControlVector::zeros(s), 0.4).size() == 0);
  CHECK(select_active(with_theta(s, {0.0, 1e-9, 3.0, 0.0}), 0.0).indices == std::vector<int>{1, 2});
  CHECK(ActiveSet::all(3).indices == std::vector<int>{0, 1, 2});
}

TEST_CASE("control vectors stay nonnegative") {
  CHECK_THROWS(with_theta(top_only({0.0, 8.0}), {1.0, -1.0}));
  CHECK_THROWS(with_theta(top_only({0.0, 8.0}), {1.0}));
}

TEST_CASE("nodal values for the two examples") {
  const StructuredMesh mesh({0, 8}, {0, 1}, 51, 21);
  const auto top = mesh.top_nodes();
  const auto bottom = mesh.bottom_nodes();

  const ControlVector ex1 = known_location_control({{Edge::top, {4.0, 4.5}, 100.0}}, kEdge, 0.5, false);
  const Vector n1 = to_nodal_control(ex1, mesh);
  for (std::size_t k = 0; k < top.size(); ++k) {
    const double x = mesh.nodes()[top[k]].x;
    CHECK(n1[static_cast<Eigen::Index>(k)] == (x >= 4.0 - 1e-12 && x < 4.5 - 1e-12 ? 100.0 : 0.0));
  }
  CHECK(n1.tail(bottom.size()).cwiseAbs().maxCoeff() == 0.0);

  const ControlVector ex2 =
      known_location_control({{Edge::top, {4.5, 5.0}, 100.0}, {Edge::bottom, {1.5, 2.0}, 80.0}}, kEdge, 0.5, false);
  const Vector n2 = to_nodal_control(ex2, mesh);
  for (std::size_t k = 0; k < bottom.size(); ++k) {
    const double x = mesh.nodes()[bottom[k]].x;
    CHECK(n2[static_cast<Eigen::Index>(top.size() + k)] == (x >= 1.5 && x < 2.0 ? 80.0 : 0.0));
  }
  CHECK(n2.head(top.size()).maxCoeff() == 100.0);
  CHECK(source_segments(ex2, {{Edge::top, {4.5, 5.0}, 100.0}, {Edge::bottom, {1.5, 2.0}, 80.0}}).size() == 2);
}

TEST_CASE("bisection with inherited values is observationally neutral") {
  const StructuredMesh mesh({0, 8}, {0, 1}, 81, 21);
  ControlVector cv = with_theta(Subdivision::uniform(kEdge, 0.5, 4), {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0});
  const Vector before = to_nodal_control(cv, mesh);
  for (int i : {6, 3, 0}) cv = bisect(cv, i).cv;
  CHECK(cv.size() == 11);
  CHECK((to_nodal_control(cv, mesh) - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("misaligned subdivisions are rejected") {
  // 0.25-wide segments on a 0.32 node spacing leave some segments without nodes
  const StructuredMesh mesh({0, 8}, {0, 1}, 26, 11);
  CHECK_THROWS(nodal_map(Subdivision::finest(kEdge, 0.25), mesh));
  CHECK_NOTHROW(nodal_map(Subdivision::finest(kEdge, 0.5), mesh));
}

TEST_CASE("optimal subdivision and distance") {
  const Subdivision coarse = Subdivision::uniform(kEdge, 0.5, 2);
  const std::vector<SourceSpec> test1 = {{Edge::top, {4.0, 4.5}, 100.0}};
  const Subdivision opt = optimal_subdivision(coarse, test1);
  CHECK(opt.breakpoints(Edge::top) == std::vector<double>{0.0, 4.0, 4.5, 5.0, 6.0, 8.0});
  CHECK(opt.breakpoints(Edge::bottom) == std::vector<double>{0.0, 4.0, 8.0});

  const EdgePair zero = distance_from_optimal(opt, coarse, test1);
  CHECK(zero.top == 0.0);
  CHECK(zero.bottom == 0.0);
  const EdgePair plus = distance_from_optimal(*opt.bisect(opt.num_segments(Edge::top)), coarse, test1);
  CHECK(plus.top == 0.0);
  CHECK(plus.bottom == 1.0);

  CHECK_THROWS(optimal_subdivision(coarse, {{Edge::top, {4.0, 4.25}, 1.0}}));
}

TEST_CASE("l1 error") {
  const std::vector<SourceSpec> truth = {{Edge::top, {4.0, 4.5}, 100.0}};
  const ControlVector exact = truth_on_finest(truth, kEdge, 0.5);
  CHECK(exact.theta.sum() == 100.0);
  const EdgePair e0 = l1_error(exact, truth);
  CHECK(e0.top == 0.0);
  CHECK(e0.bottom == 0.0);

  const EdgePair e1 = l1_error(ControlVector::zeros(Subdivision::uniform(kEdge, 0.5, 2)), truth);
  CHECK(e1.top == doctest::Approx(50.0));
  CHECK(e1.bottom == 0.0);
}
