#include <doctest.h>

#include <random>

#include "cdrinv/control_param.hpp"
#include "cdrinv/forward_solver.hpp"

using namespace cdrinv;

namespace {

PhysicalCoefficients river() {
  PhysicalCoefficients c;
  c.velocity = poiseuille(50.0);
  return c;
}

ForwardModel model(int nx, int ny, TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 0.005)) {
  return ForwardModel(StructuredMesh({0, 8}, {0, 1}, nx, ny), river(), grid);
}

Vector example1_control(const ForwardModel& m) {
  const ControlVector truth = truth_on_finest({{Edge::top, {4.0, 4.5}, 100.0}}, {0, 8}, 0.5);
  return to_nodal_control(truth, m.mesh());
}

}  // namespace

TEST_CASE("time grid") {
  const TimeGrid g = TimeGrid::uniform(0.0, 10.0, 0.05);
  CHECK(g.steps == 201);
  CHECK(g.time(200) == doctest::Approx(10.0));
  CHECK(g.index_of(2.5) == 50);
  CHECK(g.index_of(-1.0) == 0);
  CHECK(g.index_of(99.0) == 200);
  CHECK_THROWS(TimeGrid::uniform(0.0, 1.0, 0.3));
  CHECK_THROWS(TimeGrid::uniform(0.0, 1.0, 0.0));
  CHECK_THROWS(TimeGrid::uniform(1.0, 1.0, 0.1));
}

TEST_CASE("zero data gives a zero trajectory") {
  const ForwardModel m = model(26, 11);
  const Matrix obs = m.solve_observed(Vector(Vector::Zero(m.num_nodes())), Vector(Vector::Zero(m.num_controls())), 0.0);
  CHECK(obs.rows() == 11);
  CHECK(obs.cols() == m.grid().steps);
  CHECK(obs.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("observations are affine in the data") {
  const ForwardModel m = model(26, 11);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  Vector a(m.num_controls()), b(m.num_controls());
  for (int i = 0; i < a.size(); ++i) {
    a[i] = u(rng);
    b[i] = u(rng);
  }
  const Vector z = Vector::Zero(m.num_nodes());
  const Matrix ya = m.solve_observed(z, a, 0.0);
  const Matrix yb = m.solve_observed(z, b, 0.0);
  const Matrix yab = m.solve_observed(z, Vector(2.0 * a + 3.0 * b), 0.0);
  CHECK((yab - 2.0 * ya - 3.0 * yb).cwiseAbs().maxCoeff() <= 1e-10 * yab.cwiseAbs().maxCoeff());

  // inflow value and control enter additively
  const Matrix yup = m.solve_observed(z, Vector(Vector::Zero(m.num_controls())), 0.1);
  const Matrix yboth = m.solve_observed(z, a, 0.1);
  CHECK((yboth - ya - yup).cwiseAbs().maxCoeff() <= 1e-10 * yboth.cwiseAbs().maxCoeff());
}

TEST_CASE("real and complex paths agree") {
  const ForwardModel m = model(26, 11);
  const Vector c = example1_control(m);
  const Vector z = Vector::Zero(m.num_nodes());
  const Matrix y = m.solve_observed(z, c, 0.1);
  const ComplexMatrix yc = m.solve_observed(z, ComplexVector(c.cast<Complex>()), 0.1);
  CHECK((yc.real() - y).cwiseAbs().maxCoeff() <= 1e-12 * y.cwiseAbs().maxCoeff());
  CHECK(yc.imag().cwiseAbs().maxCoeff() == 0.0);

  const Trajectory traj = m.solve(z, c, 0.1);
  CHECK((observe(traj, m.observation()) - y).cwiseAbs().maxCoeff() <= 1e-12 * y.cwiseAbs().maxCoeff());
}

TEST_CASE("truncated integration leaves later columns at zero") {
  const ForwardModel m = model(26, 11);
  const Vector c = example1_control(m);
  const Vector z = Vector::Zero(m.num_nodes());
  Vector final_state;
  const Matrix full = m.solve_observed(z, c, 0.1);
  const Matrix part = m.solve_observed(z, c, 0.1, 40, &final_state);
  CHECK((part.leftCols(41) - full.leftCols(41)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(part.rightCols(part.cols() - 41).cwiseAbs().maxCoeff() == 0.0);
  const Matrix states = m.solve_states(z, c, 0.1, 40);
  CHECK((states.col(40) - final_state).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS(m.solve_observed(z, c, 0.1, m.grid().steps));
}

TEST_CASE("negative or misshapen controls are rejected") {
  const ForwardModel m = model(26, 11);
  const Vector z = Vector::Zero(m.num_nodes());
  Vector c = Vector::Zero(m.num_controls());
  c[3] = -1.0;
  CHECK_THROWS(m.solve_observed(z, c, 0.1));
  CHECK_THROWS(m.solve_observed(z, Vector(Vector::Zero(m.num_controls() + 1)), 0.1));
  CHECK_THROWS(m.solve_observed(Vector(Vector::Zero(3)), Vector(Vector::Zero(m.num_controls())), 0.1));
}

TEST_CASE("a huge time step reaches the steady state") {
  const ForwardModel big = model(26, 11, TimeGrid::uniform(0.0, 2e6, 1e6));
  const Vector c = example1_control(big);
  const Vector z = Vector::Zero(big.num_nodes());
  const Trajectory traj = big.solve(z, c, 0.1);
  const Vector steady = big.steady_state(c, 0.1);
  CHECK((traj.states.col(2) - steady).cwiseAbs().maxCoeff() <= 1e-6 * steady.cwiseAbs().maxCoeff());
}

TEST_CASE("uniform boundary data is a fixed point without reaction") {
  PhysicalCoefficients p = river();
  p.sigma = 0.0;
  const ForwardModel m(StructuredMesh({0, 8}, {0, 1}, 26, 11), p, TimeGrid::uniform(0.0, 0.5, 0.05));
  const double level = 3.0;
  const Vector c0 = Vector::Constant(m.num_nodes(), level);
  const Trajectory traj = m.solve(c0, Vector::Constant(m.num_controls(), level), level);
  CHECK((traj.states.array() - level).abs().maxCoeff() <= 1e-10);
}

TEST_CASE("outflow approaches the steady state monotonically") {
  const ForwardModel m = model(51, 21, TimeGrid::uniform(0.0, 4.0, 0.02));
  const Vector c = example1_control(m);
  const Matrix obs = m.solve_observed(Vector::Zero(m.num_nodes()), c, 0.1);
  const Vector mean = obs.colwise().mean();
  for (int k = 1; k < mean.size(); ++k) CHECK(mean[k] >= mean[k - 1] - 1e-12);

  const Vector steady = m.steady_state(c, 0.1);
  const auto& outs = m.observation().outflow_nodes;
  double steady_mean = 0.0;
  for (int n : outs) steady_mean += steady[n];
  steady_mean /= static_cast<double>(outs.size());
  CHECK(mean[mean.size() - 1] == doctest::Approx(steady_mean).epsilon(1e-3));
}

TEST_CASE("a top source reaches every interior outflow node") {
  const ForwardModel m = model(51, 21);
  const Matrix obs = m.solve_observed(Vector::Zero(m.num_nodes()), example1_control(m), 0.1);
  for (int r = 1; r + 1 < obs.rows(); ++r) CHECK(obs(r, obs.cols() - 1) > 0.0);
}

TEST_CASE("raising every segment raises the outflow") {
  // Galerkin wiggles make single-node and some single-segment responses dip
  // below zero at this Peclet number; an increase on every segment does not.
  const ForwardModel m = model(81, 21, TimeGrid::uniform(0.0, 10.0, 0.05));
  const Matrix n = nodal_map(Subdivision::finest({0, 8}, 0.5), m.mesh());
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  const Vector z = Vector::Zero(m.num_nodes());
  for (int trial = 0; trial < 5; ++trial) {
    Vector lo(n.cols()), hi(n.cols());
    for (int i = 0; i < lo.size(); ++i) {
      lo[i] = u(rng);
      hi[i] = lo[i] + u(rng);
    }
    const Matrix diff = m.solve_observed(z, Vector(n * hi), 0.1) - m.solve_observed(z, Vector(n * lo), 0.1);
    CHECK(diff.minCoeff() >= -1e-10);
    CHECK(diff.col(diff.cols() - 1).minCoeff() > 0.0);
  }
}

TEST_CASE("solve counter") {
  const ForwardModel m = model(26, 11);
  m.counter().reset();
  const Vector z = Vector::Zero(m.num_nodes());
  const Vector c = Vector::Zero(m.num_controls());
  m.solve_observed(z, c, 0.1);
  m.solve_observed(z, c, 0.1, 10);
  CHECK(m.counter().solves == 2);
  CHECK(m.counter().steps == (m.grid().steps - 1) + 10);
}
