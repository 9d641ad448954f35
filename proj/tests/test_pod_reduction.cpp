#include <doctest.h>

#include <random>

#include <Eigen/QR>

#include "cdrinv/pod_reduction.hpp"

using namespace cdrinv;

namespace {

PhysicalCoefficients river() {
  PhysicalCoefficients c;
  c.velocity = poiseuille(50.0);
  return c;
}

Matrix gaussian(std::mt19937& rng, int rows, int cols) {
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = n(rng);
  }
  return m;
}

Matrix random_orthonormal(std::mt19937& rng, int rows, int k) {
  const Eigen::HouseholderQR<Matrix> qr(gaussian(rng, rows, k));
  return qr.householderQ() * Matrix::Identity(rows, k);
}

Vector source(const StructuredMesh& mesh, Edge edge, Interval where, double value) {
  const ControlVector cv = known_location_control({{edge, where, value}}, {0, 8}, 0.5, false);
  return to_nodal_control(cv, mesh);
}

}  // namespace

TEST_CASE("truncation rank") {
  Vector s(3);
  s << 10.0, 1.0, 1e-9;
  CHECK(truncation_rank(s, TruncationRule::floor(0.01)) == 2);
  CHECK(truncation_rank(s, TruncationRule::floor(0.0)) == 3);
  CHECK(truncation_rank(s, TruncationRule::floor(20.0)) == 0);
  CHECK(truncation_rank(s, TruncationRule::energy(0.5)) == 1);
  CHECK(truncation_rank(s, TruncationRule::energy(0.999)) == 2);
  // energy 1e-18 is below the ratio's rounding; a visible tail is kept
  CHECK(truncation_rank(s, TruncationRule::energy(1.0)) == 2);
  s[2] = 0.1;
  CHECK(truncation_rank(s, TruncationRule::energy(1.0)) == 3);
  CHECK_THROWS(truncation_rank(Vector::Zero(3), TruncationRule::floor(0.01)));
  CHECK_THROWS(truncation_rank(s, TruncationRule::energy(1.5)));
}

TEST_CASE("modes are orthonormal and the spectrum is nonincreasing") {
  std::mt19937 rng(7);
  SnapshotMatrix y;
  y.columns = gaussian(rng, 30, 12);
  const PodBasis b = truncate(y, TruncationRule::floor(1e-12));
  CHECK(b.k == 12);
  CHECK((b.modes.transpose() * b.modes - Matrix::Identity(12, 12)).cwiseAbs().maxCoeff() <= 1e-12);
  for (int i = 1; i < b.singular_values.size(); ++i) CHECK(b.singular_values[i] <= b.singular_values[i - 1]);

  SnapshotMatrix rank1;
  rank1.columns = Vector::LinSpaced(10, 1.0, 10.0) * Vector::LinSpaced(4, 1.0, 4.0).transpose();
  CHECK(truncate(rank1, TruncationRule::floor(1e-8)).k == 1);

  SnapshotMatrix zero;
  zero.columns = Matrix::Zero(5, 3);
  CHECK_THROWS(truncate(zero, TruncationRule::floor(0.01)));
}

TEST_CASE("projection error equals the discarded energy") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    SnapshotMatrix y;
    y.columns = gaussian(rng, 40, 15);
    const PodBasis full = truncate(y, TruncationRule::floor(0.0));
    for (int k : {1, 5, 14}) {
      const double discarded = full.singular_values.tail(full.singular_values.size() - k).squaredNorm();
      const double err = projection_error(y.columns, full.modes.leftCols(k));
      CHECK(std::abs(err - discarded) <= 1e-8 * discarded);
    }
  }
}

TEST_CASE("no random basis beats the POD basis") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + trial % 6;  // 3..8
    SnapshotMatrix y;
    y.columns = gaussian(rng, n, 6);
    const PodBasis full = truncate(y, TruncationRule::floor(0.0));
    for (int k = 1; k < std::min(n, 6); ++k) {
      const double pod = projection_error(y.columns, full.modes.leftCols(k));
      double best = std::numeric_limits<double>::infinity();
      for (int r = 0; r < 300; ++r) best = std::min(best, projection_error(y.columns, random_orthonormal(rng, n, k)));
      CHECK(pod <= best * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("a complete basis reproduces the full model") {
  const ForwardModel model(StructuredMesh({0, 8}, {0, 1}, 11, 5), river(), TimeGrid::uniform(0.0, 0.2, 0.01));
  SnapshotMatrix id;
  id.columns = Matrix::Identity(model.num_nodes(), model.num_nodes());
  const PodBasis b = build_basis(id, TruncationRule::floor(0.5), model);
  REQUIRE(b.k == model.num_nodes());

  const Vector nodal = source(model.mesh(), Edge::top, {4.0, 5.0}, 100.0);
  const Vector c0 = Vector::Zero(model.num_nodes());
  const int last = model.grid().steps - 1;
  const Matrix full = model.solve_states(c0, nodal, 0.1, last);
  const Matrix reduced = reduced_solve(b, model, b.modes.transpose() * c0, nodal, 0.1, 0, last).lift(b);
  CHECK((reduced - full).cwiseAbs().maxCoeff() <= 1e-10 * full.cwiseAbs().maxCoeff());
  CHECK(staleness_index(b, model, c0, nodal, 0.1, 5) <= 1e-10);

  const Matrix none = reduced_solve(b, model, b.modes.transpose() * c0, Vector::Zero(nodal.size()), 0.0, 0, last)
                          .lift(b);
  CHECK(none.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("staleness detects a control the basis has not seen") {
  const ForwardModel model(StructuredMesh({0, 8}, {0, 1}, 26, 11), river(), TimeGrid::uniform(0.0, 0.3, 0.005));
  const Vector c0 = Vector::Zero(model.num_nodes());
  const Vector a = source(model.mesh(), Edge::top, {1.0, 1.5}, 100.0);
  const Vector b = source(model.mesh(), Edge::bottom, {6.0, 7.0}, 100.0);
  const PodBasis basis =
      build_basis(collect_snapshots(model, c0, a, 0.1, 0.1, 0.0), TruncationRule::floor(1e-10), model);
  CHECK(staleness_index(basis, model, c0, a, 0.1, 5) <= 1e-8);
  CHECK(staleness_index(basis, model, c0, b, 0.1, 5) > 0.1);

  PodSettings settings;
  settings.t_m = 0.1;
  settings.rule = TruncationRule::floor(1e-10);
  PodObservationMap map(model, c0, 0.1, settings, a);
  CHECK(map.switch_step() == 20);
  CHECK_FALSE(map.refresh(a));
  CHECK(map.updates() == 0);
  CHECK(map.refresh(b));
  CHECK(map.updates() == 1);
}

TEST_CASE("snapshot sampling") {
  const ForwardModel model(StructuredMesh({0, 8}, {0, 1}, 11, 5), river(), TimeGrid::uniform(0.0, 0.2, 0.01));
  const Vector c0 = Vector::Zero(model.num_nodes());
  const auto controls = model.mesh().top_nodes().size() + model.mesh().bottom_nodes().size();
  const Vector nodal = Vector::Zero(static_cast<Eigen::Index>(controls));
  const SnapshotMatrix s = collect_snapshots(model, c0, nodal, 0.1, 0.1, 0.02);
  CHECK(s.columns.cols() == 6);
  CHECK_THROWS(collect_snapshots(model, c0, nodal, 0.1, 0.1, 0.015));
  CHECK_THROWS(collect_snapshots(model, c0, nodal, 0.1, 0.2, 0.01));
}
