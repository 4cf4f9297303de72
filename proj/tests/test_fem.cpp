#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "finsler/fem.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace finsler;

namespace {

std::mt19937_64 rng(777);

Mesh two_triangle_square() {
  Mesh m;
  m.vertices = {Vector2(0, 0), Vector2(1, 0), Vector2(1, 1), Vector2(0, 1)};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  m.finalize();
  return m;
}

FemField random_field(const Mesh& mesh) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  VectorXd c(mesh.num_vertices());
  for (int i = 0; i < c.size(); ++i) c[i] = gauss(rng);
  return FemField(mesh, c);
}

std::vector<NormSpec> families() {
  Matrix2 A;
  A << 4.0, 1.0, 1.0, 2.0;
  return {NormSpec::euclidean(), NormSpec::quadratic(A),
          NormSpec::smoothed_p(3.0, 0.1)};
}

// Independent A-weighted stiffness assembly (for the quadratic oracle),
// element-by-element with explicit P1 shape gradients.
SparseMatrix stiffness_A(const Mesh& mesh, const Matrix2& A) {
  std::vector<Eigen::Triplet<double>> trip;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vector2 p0 = mesh.vertices[tri[0]];
    const Vector2 p1 = mesh.vertices[tri[1]];
    const Vector2 p2 = mesh.vertices[tri[2]];
    const double twice = (p1 - p0).x() * (p2 - p0).y() -
                         (p1 - p0).y() * (p2 - p0).x();
    Vector2 grads[3];
    grads[0] = Vector2(p1.y() - p2.y(), p2.x() - p1.x()) / twice;
    grads[1] = Vector2(p2.y() - p0.y(), p0.x() - p2.x()) / twice;
    grads[2] = Vector2(p0.y() - p1.y(), p1.x() - p0.x()) / twice;
    const double ar = 0.5 * std::abs(twice);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        trip.emplace_back(tri[i], tri[j],
                          ar * grads[i].dot(A * grads[j]));
  }
  SparseMatrix K(mesh.num_vertices(), mesh.num_vertices());
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

}  // namespace

TEST_CASE("energy pinned values") {
  const Mesh mesh = generate_mesh(DomainSpec::unit_square(), 0.25);
  for (const NormSpec& spec : families())
    CHECK(energy(spec, FemField::constant(mesh, 5.0)) == 0.0);

  const FemField ux = FemField::from_function(
      mesh, [](const Vector2& x) { return x.x(); });
  CHECK(energy(NormSpec::euclidean(), ux) ==
        doctest::Approx(1.0).epsilon(1e-14));

  Matrix2 A = Matrix2::Zero();
  A(0, 0) = 4.0;
  A(1, 1) = 1.0;
  CHECK(energy(NormSpec::quadratic(A), ux) ==
        doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("field gradient is the exact P1 gradient") {
  const Mesh mesh = two_triangle_square();
  const FemField u = FemField::from_function(
      mesh, [](const Vector2& x) { return 3.0 * x.x() - 2.0 * x.y() + 1.0; });
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Vector2 g = field_gradient(u, t);
    CHECK(g.x() == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(g.y() == doctest::Approx(-2.0).epsilon(1e-14));
  }
}

TEST_CASE("energy gradient matches central finite differences") {
  const Mesh mesh = two_triangle_square();
  for (const NormSpec& spec : families()) {
    for (int s = 0; s < 25; ++s) {
      const FemField u = random_field(mesh);
      const VectorXd g = energy_gradient(spec, u);
      for (int i = 0; i < mesh.num_vertices(); ++i) {
        FemField up = u, dn = u;
        up.coeffs[i] += 1e-6;
        dn.coeffs[i] -= 1e-6;
        const double fd = (energy(spec, up) - energy(spec, dn)) / 2e-6;
        CHECK(g[i] ==
              doctest::Approx(fd).epsilon(1e-6).scale(std::abs(fd) + 1.0));
      }
    }
  }
}

TEST_CASE("quadratic gradient equals 2 K_A u against independent assembly") {
  const Mesh mesh = generate_mesh(DomainSpec::l_shape(), 0.25);
  Matrix2 A;
  A << 4.0, 1.0, 1.0, 2.0;
  const SparseMatrix KA = stiffness_A(mesh, A);
  const NormSpec spec = NormSpec::quadratic(A);
  for (int s = 0; s < 10; ++s) {
    const FemField u = random_field(mesh);
    const VectorXd g = energy_gradient(spec, u);
    const VectorXd oracle = 2.0 * (KA * u.coeffs);
    CHECK((g - oracle).norm() <= 1e-12 * (oracle.norm() + 1.0));
    // the assembled Hessian agrees too, and reproduces the energy
    const SparseMatrix K = energy_hessian(spec, u);
    CHECK((K * u.coeffs - oracle).norm() <= 1e-12 * (oracle.norm() + 1.0));
    CHECK(energy(spec, u) ==
          doctest::Approx(0.5 * u.coeffs.dot(K * u.coeffs)).epsilon(1e-12));
  }
}

TEST_CASE("2-homogeneity identities for every family") {
  const Mesh mesh = generate_mesh(DomainSpec::unit_square(), 0.25);
  for (const NormSpec& spec : families()) {
    for (int s = 0; s < 5; ++s) {
      const FemField u = random_field(mesh);
      const SparseMatrix K = energy_hessian(spec, u);
      const VectorXd g = energy_gradient(spec, u);
      CHECK((K * u.coeffs - g).norm() <= 1e-11 * (g.norm() + 1.0));
      CHECK(energy(spec, u) ==
            doctest::Approx(0.5 * u.coeffs.dot(K * u.coeffs)).epsilon(1e-11));
    }
  }
}

TEST_CASE("assembled forms") {
  const Mesh mesh = generate_mesh(DomainSpec::unit_square(), 0.25);
  const NormSpec euc = NormSpec::euclidean();
  const VectorXd ones = VectorXd::Ones(mesh.num_vertices());

  const AssembledForms f1 =
      assemble_forms(mesh, BoundaryWeight(mesh, 1.0), euc);
  CHECK(ones.dot(f1.mass * ones) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(f1.domain_area == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(ones.dot(f1.boundary * ones) == doctest::Approx(4.0).epsilon(1e-13));
  CHECK(f1.boundary_mass == doctest::Approx(4.0).epsilon(1e-13));
  CHECK(f1.boundary_load.sum() == doctest::Approx(4.0).epsilon(1e-13));

  const AssembledForms f2 =
      assemble_forms(mesh, BoundaryWeight(mesh, 2.0), euc);
  CHECK((f2.boundary - SparseMatrix(2.0 * f1.boundary)).norm() <= 1e-13);
  CHECK(f2.boundary_mass == doctest::Approx(8.0).epsilon(1e-13));

  const AssembledForms fx = assemble_forms(
      mesh, BoundaryWeight(mesh, [](const Vector2& x) { return 1.0 + x.x(); }),
      euc);
  CHECK(fx.boundary_mass == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("dirichlet matching") {
  const Mesh mesh = generate_mesh(DomainSpec::unit_square(), 0.2);
  Matrix2 A;
  A << 4.0, 1.0, 1.0, 2.0;

  for (const NormSpec& spec : families()) {
    const FemField v0 = solve_dirichlet_matching(spec, FemField::zero(mesh));
    CHECK(v0.coeffs.norm() <= 1e-12);
  }

  // linear oracle: for quadratic norms the matching problem is the sparse
  // system K_ii v_i = (K u)_i with v = 0 on the boundary
  const NormSpec quad = NormSpec::quadratic(A);
  const SparseMatrix K = SparseMatrix(2.0 * stiffness_A(mesh, A));
  const std::vector<int> interior = mesh.interior_vertex_list();
  for (int s = 0; s < 3; ++s) {
    const FemField u = random_field(mesh);
    const FemField v = solve_dirichlet_matching(quad, u);
    for (int b : mesh.boundary_vertex_list()) CHECK(v.coeffs[b] == 0.0);

    Eigen::MatrixXd Kii(interior.size(), interior.size());
    VectorXd rhs(interior.size());
    const VectorXd Ku = K * u.coeffs;
    for (size_t i = 0; i < interior.size(); ++i) {
      rhs[i] = Ku[interior[i]];
      for (size_t j = 0; j < interior.size(); ++j)
        Kii(i, j) = K.coeff(interior[i], interior[j]);
    }
    const VectorXd vi = Kii.llt().solve(rhs);
    for (size_t i = 0; i < interior.size(); ++i)
      CHECK(v.coeffs[interior[i]] ==
            doctest::Approx(vi[i]).epsilon(1e-10).scale(vi.norm() + 1.0));

    CHECK(energy(quad, v) <= energy(quad, u) + 1e-9);
  }

  // the minimizing property holds for the nonlinear family too
  const NormSpec sp = NormSpec::smoothed_p(3.0, 0.1);
  const FemField u = random_field(mesh);
  const FemField v = solve_dirichlet_matching(sp, u);
  CHECK(energy(sp, v) <= energy(sp, u) + 1e-9);
}

TEST_CASE("harmonic extension") {
  const Mesh square = generate_mesh(DomainSpec::unit_square(), 0.2);
  for (const NormSpec& spec : families()) {
    // constants extend to constants
    const FemField h1 = harmonic_extension(
        spec, square, VectorXd::Ones(square.num_vertices()));
    CHECK((h1.coeffs - VectorXd::Ones(square.num_vertices())).lpNorm<Eigen::Infinity>() <=
          1e-9);

    // affine data extends exactly (affine functions are F-harmonic)
    const FemField aff = FemField::from_function(
        square, [](const Vector2& x) { return x.x() + 2.0 * x.y(); });
    const FemField ha = harmonic_extension(spec, square, aff.coeffs);
    CHECK((ha.coeffs - aff.coeffs).lpNorm<Eigen::Infinity>() <= 1e-8);

    // discrete maximum principle
    std::normal_distribution<double> gauss(0.0, 1.0);
    VectorXd g = VectorXd::Zero(square.num_vertices());
    double lo = 1e300, hi = -1e300;
    for (int b : square.boundary_vertex_list()) {
      g[b] = gauss(rng);
      lo = std::min(lo, g[b]);
      hi = std::max(hi, g[b]);
    }
    const FemField hg = harmonic_extension(spec, square, g);
    CHECK(hg.coeffs.minCoeff() >= lo - 1e-9);
    CHECK(hg.coeffs.maxCoeff() <= hi + 1e-9);
  }

  // euclidean disk: extension of cos(theta) is r cos(theta) = x
  const Mesh disk = generate_mesh(DomainSpec::disk(1.0), 0.05);
  VectorXd g = VectorXd::Zero(disk.num_vertices());
  for (int b : disk.boundary_vertex_list()) {
    const Vector2 x = disk.vertices[b];
    g[b] = x.x() / x.norm();
  }
  const FemField h = harmonic_extension(NormSpec::euclidean(), disk, g);
  double max_err = 0.0;
  for (int v = 0; v < disk.num_vertices(); ++v)
    max_err = std::max(max_err, std::abs(h.coeffs[v] - disk.vertices[v].x()));
  CHECK(max_err <= 0.02);
}

TEST_CASE("projection constant") {
  const Mesh mesh = generate_mesh(DomainSpec::unit_square(), 0.25);
  const BoundaryWeight beta(mesh, 1.0);
  const NormSpec euc = NormSpec::euclidean();

  CHECK(projection_constant(beta, euc, mesh, FemField::constant(mesh, 7.0)) ==
        doctest::Approx(7.0).epsilon(1e-13));

  FemField zt = random_field(mesh);
  for (int b : mesh.boundary_vertex_list()) zt.coeffs[b] = 0.0;
  CHECK(std::abs(projection_constant(beta, euc, mesh, zt)) <= 1e-13);

  const FemField ux = FemField::from_function(
      mesh, [](const Vector2& x) { return x.x(); });
  CHECK(projection_constant(beta, euc, mesh, ux) ==
        doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("energy convexity") {
  const Mesh mesh = generate_mesh(DomainSpec::unit_square(), 0.25);
  for (const NormSpec& spec : families()) {
    for (int s = 0; s < 20; ++s) {
      const FemField u = random_field(mesh);
      const FemField v = random_field(mesh);
      const FemField mid(mesh, 0.5 * (u.coeffs + v.coeffs));
      CHECK(energy(spec, mid) <=
            0.5 * (energy(spec, u) + energy(spec, v)) + 1e-10);
    }
  }
}
