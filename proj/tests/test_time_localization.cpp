#include <doctest.h>

#include "cdrinv/time_localization.hpp"

using namespace cdrinv;

namespace {

// rate rows that exceed the threshold (value 1) on [lo, hi] and vanish elsewhere
Matrix pulses(const std::vector<std::pair<int, int>>& support, int steps) {
  Matrix r = Matrix::Zero(static_cast<Eigen::Index>(support.size()), steps);
  for (std::size_t i = 0; i < support.size(); ++i) {
    for (int k = support[i].first; k <= support[i].second; ++k) r(static_cast<Eigen::Index>(i), k) = 1.0;
  }
  return r;
}

WindowOptions opts(int d, int D) {
  WindowOptions o;
  o.d = d;
  o.D = D;
  return o;
}

int first_above(const Matrix& m, int row, double level) {
  for (int k = 0; k < m.cols(); ++k) {
    if (m(row, k) > level) return k;
  }
  return -1;
}

}  // namespace

TEST_CASE("sections and their parameters") {
  const SectionPartition p({0.0, 4.0, 8.0});
  CHECK(p.num_sections() == 2);
  const Subdivision sub = Subdivision::uniform({0, 8}, 0.5, 4);
  CHECK(p.parameters(sub, 0) == std::vector<int>{0, 1, 4, 5});
  CHECK(p.parameters(sub, 1) == std::vector<int>{2, 3, 6, 7});
  CHECK(p.section_of(Segment{Edge::top, 7.5, 8.0}) == 1);
  CHECK_THROWS(SectionPartition({0.0, 4.0, 4.0}));
  CHECK_THROWS(SectionPartition({1.0}));
  CHECK(SectionPartition::from_subdivision(sub).num_sections() == 4);
}

TEST_CASE("rate of change") {
  CHECK(rate_of_change(Vector::Zero(6)).isZero());
  const Vector ramp = Vector::LinSpaced(6, 0.0, 5.0);
  CHECK((rate_of_change(ramp).array() == 1.0).all());
  Vector bump = Vector::Zero(5);
  bump[2] = 2.0;
  const Vector r = rate_of_change(bump);
  CHECK(r[1] == 1.0);
  CHECK(r[2] == 0.0);
  CHECK(r[3] == -1.0);
  CHECK(rate_of_change(Vector::Ones(1)).isZero());
}

TEST_CASE("windows for two sections") {
  // downstream section 1 responds on [3, 10], upstream section 0 on [8, 15]
  const Matrix r = pulses({{8, 15}, {3, 10}}, 30);
  const std::vector<Window> w = select_windows(r, opts(5, 40));
  REQUIRE(w.size() == 2);
  // section 1 threshold set drops the steps where section 0 is already rising
  CHECK(w[1].first == 3);
  CHECK(w[1].last == 7);
  CHECK(w[0].first == 2);
  CHECK(w[0].last == 15);

  const std::vector<Window> capped = select_windows(r, opts(5, 4));
  CHECK(capped[0].last == 11);

  const std::vector<Window> abut = select_windows(r, opts(0, 40));
  CHECK(abut[0].first == abut[1].last);
}

TEST_CASE("windows grow with the overlap and the cap") {
  const Matrix r = pulses({{20, 40}, {12, 30}, {4, 18}}, 60);
  int prev_first = 1 << 30;
  for (int d : {0, 2, 4, 8}) {
    const std::vector<Window> w = select_windows(r, opts(d, 40));
    CHECK(w[0].first <= prev_first);
    prev_first = w[0].first;
    for (int i = 0; i + 1 < 3; ++i) CHECK(w[i].first <= w[i + 1].last);
  }
  int prev_last = -1;
  for (int D : {0, 5, 10, 40}) {
    const int last = select_windows(r, opts(3, D))[0].last;
    CHECK(last >= prev_last);
    prev_last = last;
  }
}

TEST_CASE("a single section uses its own support") {
  const std::vector<Window> w = select_windows(pulses({{4, 9}}, 20), opts(5, 40));
  REQUIRE(w.size() == 1);
  CHECK(w[0].first == 4);
  CHECK(w[0].last == 9);
}

TEST_CASE("empty threshold sets") {
  // downstream section never rises on its own
  const Matrix r = pulses({{3, 10}, {3, 10}}, 20);
  CHECK_THROWS(select_windows(r, opts(5, 40)));
  WindowOptions fb = opts(5, 40);
  fb.fallback_to_own_support = true;
  const std::vector<Window> w = select_windows(r, fb);
  CHECK(w[1].first == 3);
  CHECK(w[1].last == 10);
  CHECK_THROWS(select_windows(pulses({{3, 10}}, 20), opts(-1, 40)));
}

TEST_CASE("carry over") {
  const ControlVector cv(Subdivision::uniform({0, 8}, 0.5, 2), (Vector(4) << 0.0, 0.5, 0.01, 3.0).finished());
  CHECK(carry_over(cv, {3, 1, 2, 1}, 0.1) == std::vector<int>{1, 3});
  CHECK(carry_over(cv, {}, 0.1).empty());
  CHECK_THROWS(carry_over(cv, {4}, 0.1));
  CHECK_THROWS(carry_over(cv, {0}, 0.0));
}

TEST_CASE("probe curves on the channel") {
  PhysicalCoefficients c;
  c.velocity = poiseuille(50.0);
  const ForwardModel model(StructuredMesh({0, 8}, {0, 1}, 51, 21), c, TimeGrid::uniform(0.0, 1.0, 0.005));
  const SectionPartition p({0.0, 4.0, 8.0});
  const ZetaCurves z = zeta_curves(model, p, 0.5);
  REQUIRE(z.top.rows() == 2);
  CHECK(z.top.cols() == model.grid().steps);
  for (int i = 0; i < 2; ++i) {
    CHECK(z.top.row(i).maxCoeff() == doctest::Approx(1.0));
    CHECK(z.bottom.row(i).maxCoeff() == doctest::Approx(1.0));
  }
  // the downstream probe reaches the outflow first
  CHECK(first_above(z.top, 1, 0.5) < first_above(z.top, 0, 0.5));
  CHECK(first_above(z.bottom, 1, 0.5) < first_above(z.bottom, 0, 0.5));

  const std::vector<Window> w = select_windows(z, WindowOptions{});
  CHECK(w[1].first < w[0].first);
  CHECK(w[0].first <= w[1].last);
  CHECK(w[0].last > w[1].last);
}
