#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "finsler/mesh.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace finsler;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("areas of the built-in domains") {
  // Polygonal domains are meshed exactly.
  CHECK(area(generate_mesh(DomainSpec::unit_square(), 0.5)) ==
        doctest::Approx(1.0).epsilon(1e-14));
  CHECK(area(generate_mesh(DomainSpec::l_shape(), 0.25)) ==
        doctest::Approx(0.75).epsilon(1e-14));
  CHECK(area(generate_mesh(DomainSpec::rectangle(2.0, 3.0), 0.25)) ==
        doctest::Approx(6.0).epsilon(1e-14));

  // Curved domains: inscribed polygon, second-order area deficit.
  CHECK(area(generate_mesh(DomainSpec::disk(1.0), 0.05)) ==
        doctest::Approx(kPi).epsilon(5e-3));
  CHECK(area(generate_mesh(DomainSpec::disk(1.0), 0.02)) ==
        doctest::Approx(kPi).epsilon(1e-3));
}

TEST_CASE("mesh structural invariants") {
  for (const DomainSpec& d :
       {DomainSpec::unit_square(), DomainSpec::rectangle(1.0, 2.0),
        DomainSpec::disk(1.0), DomainSpec::l_shape(),
        DomainSpec::ellipse(1.0, 0.5)}) {
    const double h = 0.1;
    const Mesh mesh = generate_mesh(d, h);
    // every edge has length <= 1.5 * target_h
    for (int ti = 0; ti < mesh.num_triangles(); ++ti) {
      const auto& t = mesh.triangles[ti];
      for (int e = 0; e < 3; ++e) {
        const Vector2 a = mesh.vertices[t[e]];
        const Vector2 b = mesh.vertices[t[(e + 1) % 3]];
        CHECK((a - b).norm() <= 1.5 * h + 1e-12);
      }
      CHECK(triangle_area(mesh, ti) > 0.0);  // CCW orientation
    }
    // outward normals: moving a bit along the normal leaves nearby triangles
    for (const auto& be : mesh.boundary_edges) {
      CHECK(be.normal.norm() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(be.length > 0.0);
      CHECK(mesh.vertex_is_boundary[be.v0]);
      CHECK(mesh.vertex_is_boundary[be.v1]);
    }
    CHECK(mesh.boundary_vertex_list().size() +
              mesh.interior_vertex_list().size() ==
          static_cast<size_t>(mesh.num_vertices()));
  }
}

TEST_CASE("anisotropic perimeter") {
  const Mesh square = generate_mesh(DomainSpec::unit_square(), 0.25);
  CHECK(anisotropic_perimeter(square, NormSpec::euclidean()) ==
        doctest::Approx(4.0).epsilon(1e-14));

  // A = diag(4,1): F(+-e1) = 2, F(+-e2) = 1, so P_F = 2+2+1+1 = 6.
  Matrix2 A = Matrix2::Zero();
  A(0, 0) = 4.0;
  A(1, 1) = 1.0;
  CHECK(anisotropic_perimeter(square, NormSpec::quadratic(A)) ==
        doctest::Approx(6.0).epsilon(1e-14));

  const Mesh disk = generate_mesh(DomainSpec::disk(1.0), 0.02);
  CHECK(anisotropic_perimeter(disk, NormSpec::euclidean()) ==
        doctest::Approx(2.0 * kPi).epsilon(2e-3));
}

TEST_CASE("boundary mass") {
  const Mesh square = generate_mesh(DomainSpec::unit_square(), 0.25);
  const NormSpec euc = NormSpec::euclidean();

  CHECK(boundary_mass(square, BoundaryWeight(square, 1.0), euc) ==
        doctest::Approx(4.0).epsilon(1e-14));
  CHECK(boundary_mass(square, BoundaryWeight(square, 2.0), euc) ==
        doctest::Approx(8.0).epsilon(1e-14));

  // beta = 1 + x on the unit square boundary: integral = 4 + int x ds = 6.
  const BoundaryWeight affine(
      square, [](const Vector2& x) { return 1.0 + x.x(); });
  CHECK(boundary_mass(square, affine, euc) ==
        doctest::Approx(6.0).epsilon(1e-12));

  // m(beta == c) = c * P_F for every norm.
  Matrix2 A;
  A << 4.0, 1.0, 1.0, 2.0;
  for (const NormSpec& spec :
       {euc, NormSpec::quadratic(A), NormSpec::smoothed_p(3.0, 0.1)}) {
    const double c = 2.5;
    CHECK(boundary_mass(square, BoundaryWeight(square, c), spec) ==
          doctest::Approx(c * anisotropic_perimeter(square, spec))
              .epsilon(1e-13));
  }
}

TEST_CASE("boundary weight validation") {
  const Mesh square = generate_mesh(DomainSpec::unit_square(), 0.5);
  CHECK_THROWS_AS(BoundaryWeight(square, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(
      BoundaryWeight(square, [](const Vector2& x) { return x.x() - 0.5; }),
      std::invalid_argument);
  // interior entries of an explicit vector are ignored
  Eigen::VectorXd vals = Eigen::VectorXd::Constant(square.num_vertices(), 3.0);
  for (int v : square.interior_vertex_list()) vals[v] = -100.0;
  CHECK_NOTHROW(BoundaryWeight(square, vals));
}

TEST_CASE("mesh exchange format round trip") {
  const Mesh mesh = generate_mesh(DomainSpec::l_shape(), 0.25);
  std::stringstream buf;
  save_mesh(mesh, buf);

  // header is "NV NT NB"
  std::stringstream header(buf.str());
  int nv = 0, nt = 0, nb = 0;
  header >> nv >> nt >> nb;
  CHECK(nv == mesh.num_vertices());
  CHECK(nt == mesh.num_triangles());
  CHECK(nb == static_cast<int>(mesh.boundary_edges.size()));

  const Mesh loaded = load_mesh(buf);
  REQUIRE(loaded.num_vertices() == mesh.num_vertices());
  REQUIRE(loaded.num_triangles() == mesh.num_triangles());
  CHECK(area(loaded) == doctest::Approx(area(mesh)).epsilon(1e-15));
  for (size_t e = 0; e < mesh.boundary_edges.size(); ++e) {
    // normals are recomputed on load and must agree
    CHECK((loaded.boundary_edges[e].normal - mesh.boundary_edges[e].normal)
              .norm() <= 1e-12);
  }

  std::stringstream bad("3 1 3\n0 0\n1 0\n0 1\n0 1 2\n0 1\n1 2\n");
  CHECK_THROWS_AS(load_mesh(bad), std::invalid_argument);
}

TEST_CASE("invalid inputs") {
  CHECK_THROWS_AS(generate_mesh(DomainSpec::unit_square(), 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(load_mesh_file("/nonexistent/mesh.txt"),
                  std::invalid_argument);
}
