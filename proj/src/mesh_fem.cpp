#include "cdrinv/mesh_fem.hpp"

#include <cmath>
#include <string>

namespace cdrinv {

StructuredMesh::StructuredMesh(Interval x_range, Interval y_range, int nx, int ny)
    : x_range_(x_range), y_range_(y_range), nx_(nx), ny_(ny) {
  if (nx < 2 || ny < 2) {
    throw std::invalid_argument("mesh needs at least 2 nodes per axis, got " +
                                std::to_string(nx) + "x" + std::to_string(ny));
  }
  if (!(x_range.hi > x_range.lo) || !(y_range.hi > y_range.lo)) {
    throw std::invalid_argument("mesh ranges must be non-degenerate");
  }

  nodes_.reserve(static_cast<std::size_t>(nx) * ny);
  tags_.reserve(nodes_.capacity());
  const double hx = dx();
  const double hy = dy();
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double x = (i == nx - 1) ? x_range.hi : x_range.lo + i * hx;
      const double y = (j == ny - 1) ? y_range.hi : y_range.lo + j * hy;
      nodes_.push_back({x, y});
      BoundaryTag tag = BoundaryTag::interior;
      if (i == 0) {
        tag = BoundaryTag::upstream;
      } else if (i == nx - 1) {
        tag = BoundaryTag::downstream;
      } else if (j == 0 || j == ny - 1) {
        tag = BoundaryTag::horizontal;
      }
      tags_.push_back(tag);
    }
  }

  elements_.reserve(2 * static_cast<std::size_t>(nx - 1) * (ny - 1));
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const int a = index(i, j);
      const int b = index(i + 1, j);
      const int c = index(i + 1, j + 1);
      const int d = index(i, j + 1);
      elements_.push_back({a, b, c});
      elements_.push_back({a, c, d});
    }
  }
}

std::vector<int> StructuredMesh::top_nodes() const {
  std::vector<int> out;
  for (int i = 1; i + 1 < nx_; ++i) out.push_back(index(i, ny_ - 1));
  return out;
}

std::vector<int> StructuredMesh::bottom_nodes() const {
  std::vector<int> out;
  for (int i = 1; i + 1 < nx_; ++i) out.push_back(index(i, 0));
  return out;
}

std::vector<int> StructuredMesh::horizontal_nodes() const {
  auto out = top_nodes();
  const auto bottom = bottom_nodes();
  out.insert(out.end(), bottom.begin(), bottom.end());
  return out;
}

std::vector<int> StructuredMesh::outflow_nodes() const {
  std::vector<int> out;
  for (int j = 0; j < ny_; ++j) out.push_back(index(nx_ - 1, j));
  return out;
}

std::vector<int> StructuredMesh::upstream_nodes() const {
  std::vector<int> out;
  for (int j = 0; j < ny_; ++j) out.push_back(index(0, j));
  return out;
}

double StructuredMesh::element_area(int e) const {
  const auto& el = elements_[e];
  const Point& p0 = nodes_[el[0]];
  const Point& p1 = nodes_[el[1]];
  const Point& p2 = nodes_[el[2]];
  return 0.5 * ((p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y));
}

void PhysicalCoefficients::validate() const {
  if (!(mu > 0.0)) throw std::invalid_argument("diffusivity mu must be positive");
  if (sigma < 0.0) throw std::invalid_argument("reaction sigma must be nonnegative");
  if (!velocity) throw std::invalid_argument("velocity field is not set");
}

VelocityField poiseuille(double nu) {
  return [nu](double, double y) { return Velocity{-4.0 * nu * y * y + 4.0 * nu * y, 0.0}; };
}

VelocityField uniform_velocity(double ux, double uy) {
  return [ux, uy](double, double) { return Velocity{ux, uy}; };
}

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

SparseMatrix from_triplets(int n, const Triplets& t) {
  SparseMatrix m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

// Zero the rows and columns of Dirichlet nodes.
SparseMatrix strip_dirichlet(const SparseMatrix& m, const std::vector<char>& is_dirichlet) {
  SparseMatrix out = m;
  out.prune([&](Eigen::Index row, Eigen::Index col, double) {
    return !is_dirichlet[row] && !is_dirichlet[col];
  });
  out.makeCompressed();
  return out;
}

}  // namespace

namespace {

struct QuadraturePoint {
  std::array<double, 3> l;  // barycentric
  double w;
};

// Seven-point rule of degree 5 on the reference triangle (weights sum to 1).
constexpr double kA1 = 0.059715871789770, kB1 = 0.470142064105115;
constexpr double kA2 = 0.797426985353087, kB2 = 0.101286507323456;
constexpr double kW1 = 0.132394152788506, kW2 = 0.125939180544827;
constexpr std::array<QuadraturePoint, 7> kQuadrature = {{
    {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, 0.225},
    {{kA1, kB1, kB1}, kW1},
    {{kB1, kA1, kB1}, kW1},
    {{kB1, kB1, kA1}, kW1},
    {{kA2, kB2, kB2}, kW2},
    {{kB2, kA2, kB2}, kW2},
    {{kB2, kB2, kA2}, kW2},
}};

}  // namespace

FemSystem assemble(const StructuredMesh& mesh, const PhysicalCoefficients& coeffs) {
  coeffs.validate();
  const int n = mesh.num_nodes();
  Triplets mass_t, stiff_t, conv_t, react_t;
  const std::size_t nnz_guess = 9 * mesh.elements().size();
  mass_t.reserve(nnz_guess);
  stiff_t.reserve(nnz_guess);
  conv_t.reserve(nnz_guess);
  react_t.reserve(nnz_guess);

  const auto& nodes = mesh.nodes();
  for (int e = 0; e < static_cast<int>(mesh.elements().size()); ++e) {
    const auto& el = mesh.elements()[e];
    const Point& p0 = nodes[el[0]];
    const Point& p1 = nodes[el[1]];
    const Point& p2 = nodes[el[2]];
    const double area = mesh.element_area(e);

    // grad(phi_k) = (b_k, c_k) / (2 area)
    const std::array<double, 3> b = {p1.y - p2.y, p2.y - p0.y, p0.y - p1.y};
    const std::array<double, 3> c = {p2.x - p1.x, p0.x - p2.x, p1.x - p0.x};
    const double inv2a = 1.0 / (2.0 * area);

    // int_T u phi_a for each vertex a, exact for velocities up to degree 4
    std::array<Velocity, 3> u_phi{};
    for (const auto& q : kQuadrature) {
      const double x = q.l[0] * p0.x + q.l[1] * p1.x + q.l[2] * p2.x;
      const double y = q.l[0] * p0.y + q.l[1] * p1.y + q.l[2] * p2.y;
      const Velocity u = coeffs.velocity(x, y);
      for (int a = 0; a < 3; ++a) {
        u_phi[a].ux += q.w * area * q.l[a] * u.ux;
        u_phi[a].uy += q.w * area * q.l[a] * u.uy;
      }
    }

    for (int a = 0; a < 3; ++a) {
      for (int k = 0; k < 3; ++k) {
        const double m = area / 12.0 * (a == k ? 2.0 : 1.0);
        const double grad_dot = (b[a] * b[k] + c[a] * c[k]) * inv2a * inv2a;
        // row a is the test function, column k the trial function
        const double conv = (u_phi[a].ux * b[k] + u_phi[a].uy * c[k]) * inv2a;
        mass_t.emplace_back(el[a], el[k], m);
        stiff_t.emplace_back(el[a], el[k], coeffs.mu * area * grad_dot);
        conv_t.emplace_back(el[a], el[k], conv);
        react_t.emplace_back(el[a], el[k], coeffs.sigma * m);
      }
    }
  }

  FemSystem sys;
  sys.mass = from_triplets(n, mass_t);
  sys.stiffness = from_triplets(n, stiff_t);
  sys.convection = from_triplets(n, conv_t);
  sys.reaction = from_triplets(n, react_t);
  sys.op = sys.stiffness + sys.convection + sys.reaction;
  sys.op.makeCompressed();

  sys.is_dirichlet.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    const BoundaryTag t = mesh.tag(i);
    if (t == BoundaryTag::upstream || t == BoundaryTag::horizontal) {
      sys.is_dirichlet[i] = 1;
      sys.dirichlet_nodes.push_back(i);
    }
  }
  sys.upstream_nodes = mesh.upstream_nodes();
  sys.horizontal_nodes = mesh.horizontal_nodes();

  sys.mass_free = strip_dirichlet(sys.mass, sys.is_dirichlet);
  sys.op_free = strip_dirichlet(sys.op, sys.is_dirichlet);
  Triplets id_t;
  for (int i : sys.dirichlet_nodes) id_t.emplace_back(i, i, 1.0);
  sys.dirichlet_identity = from_triplets(n, id_t);
  return sys;
}

Vector dirichlet_values(const FemSystem& system, const Vector& control, double c_up) {
  if (control.size() != static_cast<Eigen::Index>(system.horizontal_nodes.size())) {
    throw std::invalid_argument("control length " + std::to_string(control.size()) +
                                " does not match horizontal node count " +
                                std::to_string(system.horizontal_nodes.size()));
  }
  Vector g = Vector::Zero(system.size());
  for (int i : system.upstream_nodes) g[i] = c_up;
  for (std::size_t k = 0; k < system.horizontal_nodes.size(); ++k) {
    g[system.horizontal_nodes[k]] = control[static_cast<Eigen::Index>(k)];
  }
  return g;
}

Vector load_vector(const FemSystem& system, const Vector& control, double c_up) {
  if ((control.array() < 0.0).any()) {
    throw std::invalid_argument("boundary control must be nonnegative");
  }
  const Vector g = dirichlet_values(system, control, c_up);
  Vector f = -(system.op * g);
  for (int i : system.dirichlet_nodes) f[i] = 0.0;
  return f;
}

}  // namespace cdrinv
