#include "finsler/fem.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace finsler {

namespace {

// 2x3 matrix of P1 basis gradients on triangle t.
Eigen::Matrix<double, 2, 3> basis_gradients(const Mesh& mesh, int t, double area_t) {
  const auto& tri = mesh.triangles[t];
  Eigen::Matrix<double, 2, 3> G;
  for (int i = 0; i < 3; ++i) {
    const Vector2& pj = mesh.vertices[tri[(i + 1) % 3]];
    const Vector2& pk = mesh.vertices[tri[(i + 2) % 3]];
    G(0, i) = (pj.y() - pk.y()) / (2.0 * area_t);
    G(1, i) = (pk.x() - pj.x()) / (2.0 * area_t);
  }
  return G;
}

Matrix2 hessian_weight(const NormSpec& spec, const Vector2& grad) {
  if (grad.isZero(0.0)) {
    if (spec.kind() != NormKind::SmoothedP)
      return norm_hess_F2(spec, Vector2(1.0, 0.0));  // constant for these kinds
    const double a = spec.growth_lower(), b = spec.growth_upper();
    return (a * a + b * b) * Matrix2::Identity();
  }
  return norm_hess_F2(spec, grad);
}

struct DofMap {
  std::vector<int> to_reduced;  // vertex -> reduced index or -1
  std::vector<int> to_full;     // reduced index -> vertex
};

DofMap interior_dofs(const Mesh& mesh) {
  DofMap map;
  map.to_reduced.assign(mesh.num_vertices(), -1);
  for (int v : mesh.interior_vertex_list()) {
    map.to_reduced[v] = static_cast<int>(map.to_full.size());
    map.to_full.push_back(v);
  }
  return map;
}

SparseMatrix restrict_matrix(const SparseMatrix& K, const DofMap& map) {
  const int n = static_cast<int>(map.to_full.size());
  std::vector<Eigen::Triplet<double>> trips;
  for (int col = 0; col < K.outerSize(); ++col) {
    const int rc = map.to_reduced[col];
    if (rc < 0) continue;
    for (SparseMatrix::InnerIterator it(K, col); it; ++it) {
      const int rr = map.to_reduced[static_cast<int>(it.row())];
      if (rr >= 0) trips.emplace_back(rr, rc, it.value());
    }
  }
  SparseMatrix R(n, n);
  R.setFromTriplets(trips.begin(), trips.end());
  return R;
}

// Damped Newton for min over interior dofs of E_F(v) - g^T v, boundary
// coefficients held fixed. The Hessian-weighted stiffness is the exact
// Jacobian; Armijo backtracking keeps the convex objective decreasing, with
// a gradient-descent fallback when the Newton step fails.
FemField minimize_energy_linear_term(const NormSpec& spec, const Mesh& mesh,
                                     FemField v, const VectorXd& g,
                                     double tol_scale, const SolveOptions& opts,
                                     SolveDiagnostics* diag) {
  const DofMap map = interior_dofs(mesh);
  const int ni = static_cast<int>(map.to_full.size());
  auto objective = [&](const FemField& w) { return energy(spec, w) - g.dot(w.coeffs); };
  auto interior_residual = [&](const VectorXd& full) {
    VectorXd r(ni);
    for (int i = 0; i < ni; ++i) r[i] = full[map.to_full[i]];
    return r;
  };

  double res_norm = 0.0;
  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    const VectorXd grad_full = energy_gradient(spec, v) - g;
    const VectorXd r = interior_residual(grad_full);
    res_norm = ni > 0 ? r.lpNorm<Eigen::Infinity>() : 0.0;
    if (res_norm <= opts.tol * tol_scale) break;

    const SparseMatrix K = restrict_matrix(energy_hessian(spec, v), map);
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(K);
    VectorXd d;
    if (ldlt.info() == Eigen::Success) {
      d = ldlt.solve(-r);
    } else {
      d = -r;  // Jacobian near-singular: plain descent direction
    }
    if (d.dot(r) >= 0.0) d = -r;

    const double j0 = objective(v);
    const double slope = d.dot(r);
    // Near the minimum the true decrease falls below the roundoff of the
    // objective; the slack keeps the (locally quadratic) Newton step accepted.
    const double slack = 1e-14 * (std::abs(j0) + 1.0);
    double t = 1.0;
    FemField trial = v;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      trial.coeffs = v.coeffs;
      for (int i = 0; i < ni; ++i) trial.coeffs[map.to_full[i]] += t * d[i];
      if (objective(trial) <= j0 + 1e-4 * t * slope + slack) { accepted = true; break; }
      t *= 0.5;
    }
    if (!accepted) break;
    v = trial;
  }

  if (diag) {
    diag->iterations = iter;
    diag->residual = res_norm;
  }
  if (res_norm > opts.tol * tol_scale)
    throw std::runtime_error("fem: nonlinear solve did not converge, residual " +
                             std::to_string(res_norm));
  return v;
}

}  // namespace

Vector2 field_gradient(const FemField& u, int t) {
  const Mesh& mesh = *u.mesh;
  const auto& tri = mesh.triangles[t];
  const auto G = basis_gradients(mesh, t, triangle_area(mesh, t));
  return G * Eigen::Vector3d(u.coeffs[tri[0]], u.coeffs[tri[1]], u.coeffs[tri[2]]);
}

double energy(const NormSpec& spec, const FemField& u) {
  const Mesh& mesh = *u.mesh;
  double e = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double f = norm_eval(spec, field_gradient(u, t));
    e += f * f * triangle_area(mesh, t);
  }
  return e;
}

VectorXd energy_gradient(const NormSpec& spec, const FemField& u) {
  const Mesh& mesh = *u.mesh;
  VectorXd g = VectorXd::Zero(mesh.num_vertices());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double at = triangle_area(mesh, t);
    const Vector2 dF2 = norm_grad_F2(spec, field_gradient(u, t));
    if (dF2.isZero(0.0)) continue;
    const auto G = basis_gradients(mesh, t, at);
    const Eigen::Vector3d local = at * (G.transpose() * dF2);
    const auto& tri = mesh.triangles[t];
    for (int i = 0; i < 3; ++i) g[tri[i]] += local[i];
  }
  return g;
}

SparseMatrix energy_hessian(const NormSpec& spec, const FemField& u) {
  const Mesh& mesh = *u.mesh;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(9 * mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double at = triangle_area(mesh, t);
    const Matrix2 W = hessian_weight(spec, field_gradient(u, t));
    const auto G = basis_gradients(mesh, t, at);
    const Eigen::Matrix3d local = at * (G.transpose() * W * G);
    const auto& tri = mesh.triangles[t];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        trips.emplace_back(tri[i], tri[j], local(i, j));
  }
  SparseMatrix K(mesh.num_vertices(), mesh.num_vertices());
  K.setFromTriplets(trips.begin(), trips.end());
  return K;
}

AssembledForms assemble_forms(const Mesh& mesh, const BoundaryWeight& beta,
                              const NormSpec& spec) {
  const int nv = mesh.num_vertices();
  AssembledForms forms;

  std::vector<Eigen::Triplet<double>> mt;
  mt.reserve(9 * mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double at = triangle_area(mesh, t);
    const auto& tri = mesh.triangles[t];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        mt.emplace_back(tri[i], tri[j], at / 12.0 * (i == j ? 2.0 : 1.0));
  }
  forms.mass.resize(nv, nv);
  forms.mass.setFromTriplets(mt.begin(), mt.end());

  // Edge integrals of beta * phi_i * phi_j and beta * phi_i with
  // piecewise-linear beta; closed forms are exact for the cubic integrand.
  std::vector<Eigen::Triplet<double>> bt;
  forms.boundary_load = VectorXd::Zero(nv);
  for (const auto& be : mesh.boundary_edges) {
    const double s = norm_eval(spec, be.normal) * be.length;
    const double bi = beta[be.v0], bj = beta[be.v1];
    bt.emplace_back(be.v0, be.v0, s * (bi / 4.0 + bj / 12.0));
    bt.emplace_back(be.v1, be.v1, s * (bi / 12.0 + bj / 4.0));
    bt.emplace_back(be.v0, be.v1, s * (bi + bj) / 12.0);
    bt.emplace_back(be.v1, be.v0, s * (bi + bj) / 12.0);
    forms.boundary_load[be.v0] += s * (bi / 3.0 + bj / 6.0);
    forms.boundary_load[be.v1] += s * (bi / 6.0 + bj / 3.0);
  }
  forms.boundary.resize(nv, nv);
  forms.boundary.setFromTriplets(bt.begin(), bt.end());

  forms.domain_area = area(mesh);
  forms.boundary_mass = forms.boundary_load.sum();
  return forms;
}

FemField solve_dirichlet_matching(const NormSpec& spec, const FemField& u,
                                  const SolveOptions& opts,
                                  SolveDiagnostics* diag) {
  const Mesh& mesh = *u.mesh;
  const VectorXd g = energy_gradient(spec, u);
  const double tol_scale = 1.0 + g.lpNorm<Eigen::Infinity>();
  // Warm start from the frozen-coefficient linear solve at u.
  FemField v = FemField::zero(mesh);
  {
    const DofMap map = interior_dofs(mesh);
    const SparseMatrix K = restrict_matrix(energy_hessian(spec, u), map);
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(K);
    if (ldlt.info() == Eigen::Success) {
      VectorXd gi(map.to_full.size());
      for (size_t i = 0; i < map.to_full.size(); ++i) gi[i] = g[map.to_full[i]];
      const VectorXd vi = ldlt.solve(gi);
      for (size_t i = 0; i < map.to_full.size(); ++i) v.coeffs[map.to_full[i]] = vi[i];
    }
  }
  return minimize_energy_linear_term(spec, mesh, v, g, tol_scale, opts, diag);
}

FemField harmonic_extension(const NormSpec& spec, const Mesh& mesh,
                            const VectorXd& g, const SolveOptions& opts,
                            SolveDiagnostics* diag, const FemField* guess) {
  FemField h = guess ? *guess : FemField::zero(mesh);
  double gmax = 0.0;
  for (int v : mesh.boundary_vertex_list()) {
    h.coeffs[v] = g[v];
    gmax = std::max(gmax, std::abs(g[v]));
  }
  // Warm start: extension that is harmonic for the frozen coefficients of the
  // boundary-interpolated field. A caller-provided guess skips this pre-solve.
  if (!guess) {
    const DofMap map = interior_dofs(mesh);
    const SparseMatrix Kfull = energy_hessian(spec, h);
    const SparseMatrix K = restrict_matrix(Kfull, map);
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(K);
    if (ldlt.info() == Eigen::Success) {
      const VectorXd r = Kfull * h.coeffs;
      VectorXd ri(map.to_full.size());
      for (size_t i = 0; i < map.to_full.size(); ++i) ri[i] = r[map.to_full[i]];
      const VectorXd di = ldlt.solve(-ri);
      for (size_t i = 0; i < map.to_full.size(); ++i)
        h.coeffs[map.to_full[i]] += di[i];
    }
  }
  h = minimize_energy_linear_term(spec, mesh, h,
                                  VectorXd::Zero(mesh.num_vertices()),
                                  1.0 + gmax, opts, diag);
  return h;
}

double projection_constant(const BoundaryWeight& beta, const NormSpec& spec,
                           const Mesh& mesh, const FemField& u) {
  double num = 0.0, m = 0.0;
  for (const auto& be : mesh.boundary_edges) {
    const double s = norm_eval(spec, be.normal) * be.length;
    const double bi = beta[be.v0], bj = beta[be.v1];
    const double ui = u.coeffs[be.v0], uj = u.coeffs[be.v1];
    num += s * (ui * (bi / 3.0 + bj / 6.0) + uj * (bi / 6.0 + bj / 3.0));
    m += s * 0.5 * (bi + bj);
  }
  return num / m;
}

}  // namespace finsler
