#pragma once

#include <array>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace cdrinv {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

enum class BoundaryTag { interior, horizontal, upstream, downstream };

/// Uniform rectangular grid split into P1 triangles.
///
/// Nodes are numbered row-major with x running fastest: node (i, j) has index
/// j * nx + i. The left edge is the inflow boundary, the right edge the outflow
/// boundary, and the top/bottom edges form the horizontal boundary where
/// sources may sit. Corner nodes belong to the inflow/outflow edges.
class StructuredMesh {
 public:
  StructuredMesh(Interval x_range, Interval y_range, int nx, int ny);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int num_nodes() const { return nx_ * ny_; }
  Interval x_range() const { return x_range_; }
  Interval y_range() const { return y_range_; }
  double dx() const { return x_range_.length() / (nx_ - 1); }
  double dy() const { return y_range_.length() / (ny_ - 1); }
  double area() const { return x_range_.length() * y_range_.length(); }

  int index(int i, int j) const { return j * nx_ + i; }
  const std::vector<Point>& nodes() const { return nodes_; }
  const std::vector<std::array<int, 3>>& elements() const { return elements_; }
  const std::vector<BoundaryTag>& tags() const { return tags_; }
  BoundaryTag tag(int node) const { return tags_[node]; }

  // Horizontal-boundary nodes, left to right, corners excluded.
  std::vector<int> top_nodes() const;
  std::vector<int> bottom_nodes() const;
  // Top nodes followed by bottom nodes; the layout used for nodal controls.
  std::vector<int> horizontal_nodes() const;
  // Outflow nodes ordered bottom to top (corners included).
  std::vector<int> outflow_nodes() const;
  std::vector<int> upstream_nodes() const;

  double element_area(int e) const;

 private:
  Interval x_range_;
  Interval y_range_;
  int nx_;
  int ny_;
  std::vector<Point> nodes_;
  std::vector<std::array<int, 3>> elements_;
  std::vector<BoundaryTag> tags_;
};

struct Velocity {
  double ux = 0.0;
  double uy = 0.0;
};

using VelocityField = std::function<Velocity(double, double)>;

struct PhysicalCoefficients {
  double mu = 0.1;
  double sigma = 0.1;
  VelocityField velocity;
  double c_up = 0.1;
  double nu = 50.0;

  void validate() const;
};

// u = (-4 nu y^2 + 4 nu y, 0)
VelocityField poiseuille(double nu);
VelocityField uniform_velocity(double ux, double uy);

/// Assembled semi-discrete operators for M C' + A C = F.
///
/// `mass` and `op` are the raw Galerkin matrices (no boundary conditions).
/// `mass_free`/`op_free` have Dirichlet rows and columns removed (zeroed),
/// which is the form the time stepper and the reduced models work with.
struct FemSystem {
  SparseMatrix mass;
  SparseMatrix stiffness;
  SparseMatrix convection;
  SparseMatrix reaction;
  SparseMatrix op;

  SparseMatrix mass_free;
  SparseMatrix op_free;
  SparseMatrix dirichlet_identity;

  std::vector<int> dirichlet_nodes;
  std::vector<char> is_dirichlet;
  std::vector<int> upstream_nodes;
  std::vector<int> horizontal_nodes;

  int size() const { return static_cast<int>(mass.rows()); }
};

FemSystem assemble(const StructuredMesh& mesh, const PhysicalCoefficients& coeffs);

/// Full-length vector carrying the imposed Dirichlet values (c_up on the
/// inflow edge, the nodal control on the horizontal edges) and zero elsewhere.
Vector dirichlet_values(const FemSystem& system, const Vector& control, double c_up);

/// Boundary lift F = -A g restricted to free rows; zero on Dirichlet rows.
/// `control` holds one value per horizontal node (see horizontal_nodes()).
Vector load_vector(const FemSystem& system, const Vector& control, double c_up);

}  // namespace cdrinv
