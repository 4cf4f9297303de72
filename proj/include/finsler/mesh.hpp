#pragma once

#include "finsler/norms.hpp"

#include <Eigen/Dense>

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace finsler {

struct BoundaryEdge {
  int v0 = -1, v1 = -1;   // endpoints, in CCW boundary orientation
  Vector2 normal;          // unit outward normal
  double length = 0.0;
};

// Conforming triangulation of a connected planar Lipschitz domain.
// All triangles are counterclockwise; boundary edges carry precomputed
// outward normals and lengths.
struct Mesh {
  std::vector<Vector2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<BoundaryEdge> boundary_edges;
  std::vector<bool> vertex_is_boundary;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }

  // Indices of boundary vertices, ascending.
  std::vector<int> boundary_vertex_list() const;
  std::vector<int> interior_vertex_list() const;

  // Derives boundary edges, normals, and flags from the triangle list and
  // checks every structural invariant. Throws std::runtime_error on a
  // malformed mesh.
  void finalize();
};

struct DomainSpec {
  enum class Kind { UnitSquare, Rectangle, Disk, LShape, Ellipse };
  Kind kind = Kind::UnitSquare;
  double param_a = 1.0;  // rectangle width / disk radius / ellipse semi-axis a
  double param_b = 1.0;  // rectangle height / ellipse semi-axis b

  static DomainSpec unit_square() { return {Kind::UnitSquare, 1.0, 1.0}; }
  static DomainSpec rectangle(double w, double h) { return {Kind::Rectangle, w, h}; }
  static DomainSpec disk(double r) { return {Kind::Disk, r, r}; }
  static DomainSpec l_shape() { return {Kind::LShape, 1.0, 1.0}; }
  static DomainSpec ellipse(double a, double b) { return {Kind::Ellipse, a, b}; }
};

// Structured mesher for the built-in domain families. Curved boundaries are
// replaced by inscribed polygons with boundary vertex spacing <= target_h;
// every edge has length <= 1.5 * target_h.
Mesh generate_mesh(const DomainSpec& domain, double target_h);

double area(const Mesh& mesh);
double triangle_area(const Mesh& mesh, int t);

// P_F(Omega) = sum over boundary edges of F(nu) * length.
double anisotropic_perimeter(const Mesh& mesh, const NormSpec& spec);

// Pointwise-positive boundary weight beta, sampled at boundary vertices and
// interpreted piecewise-linearly along boundary edges. Stored as a
// vertex-indexed vector (zero on interior vertices).
class BoundaryWeight {
public:
  BoundaryWeight(const Mesh& mesh, double constant);
  // Explicit vertex-indexed samples; interior entries are ignored.
  BoundaryWeight(const Mesh& mesh, const Eigen::VectorXd& vertex_values);
  // f is evaluated at each boundary vertex position.
  template <typename F>
    requires std::is_invocable_r_v<double, F&, const Eigen::Vector2d&>
  BoundaryWeight(const Mesh& mesh, F&& f) : values_(mesh.num_vertices()) {
    values_.setZero();
    for (int v : mesh.boundary_vertex_list()) values_[v] = f(mesh.vertices[v]);
    validate(mesh);
  }

  double operator[](int vertex) const { return values_[vertex]; }
  const Eigen::VectorXd& values() const { return values_; }

private:
  void validate(const Mesh& mesh) const;
  Eigen::VectorXd values_;
};

// m = integral over the boundary of beta * F(nu); exact for piecewise-linear
// beta on a polygonal boundary. Equals anisotropic_perimeter for beta == 1.
double boundary_mass(const Mesh& mesh, const BoundaryWeight& beta,
                     const NormSpec& spec);

// Plain-text mesh exchange format:
//   line 1: NV NT NB
//   NV lines "x y", NT lines "i j k" (0-based, CCW), NB lines "i j".
// Normals are recomputed on load.
void save_mesh(const Mesh& mesh, std::ostream& out);
Mesh load_mesh(std::istream& in);
void save_mesh_file(const Mesh& mesh, const std::string& path);
Mesh load_mesh_file(const std::string& path);

}  // namespace finsler
