#pragma once

#include "finsler/mesh.hpp"
#include "finsler/norms.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace finsler {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Eigen::VectorXd;

// P1 (vertex-based, piecewise-linear) scalar field on a mesh.
struct FemField {
  const Mesh* mesh = nullptr;
  VectorXd coeffs;

  FemField() = default;
  FemField(const Mesh& m, const VectorXd& c) : mesh(&m), coeffs(c) {}
  static FemField zero(const Mesh& m) {
    return FemField(m, VectorXd::Zero(m.num_vertices()));
  }
  static FemField constant(const Mesh& m, double value) {
    return FemField(m, VectorXd::Constant(m.num_vertices(), value));
  }
  template <typename F>
  static FemField from_function(const Mesh& m, F&& f) {
    VectorXd c(m.num_vertices());
    for (int v = 0; v < m.num_vertices(); ++v) c[v] = f(m.vertices[v]);
    return FemField(m, c);
  }
};

// Gradient of the field on triangle t (constant per triangle).
Vector2 field_gradient(const FemField& u, int t);

// E_F(u) = sum_T F^2(grad u|_T) * area(T); exact for P1 fields.
double energy(const NormSpec& spec, const FemField& u);

// Exact gradient of energy() with respect to the vertex coefficients.
// Triangles with grad u = 0 contribute nothing (F * F_xi extends by 0).
VectorXd energy_gradient(const NormSpec& spec, const FemField& u);

// [F^2]_xixi-weighted stiffness matrix K(u). Because F^2 is 2-homogeneous,
// K(u) is simultaneously the exact Hessian of the energy and a secant:
// E_F(u) = u^T K(u) u / 2 and grad E_F(u) = K(u) u. Triangles where
// grad u = 0 get the isotropic fallback weight (a^2 + b^2) * I.
SparseMatrix energy_hessian(const NormSpec& spec, const FemField& u);

struct AssembledForms {
  SparseMatrix mass;            // M_ij     = int_Omega  phi_i phi_j
  SparseMatrix boundary;        // B_ij     = int_bdry   beta phi_i phi_j F(nu)
  VectorXd boundary_load;       // b_i      = int_bdry   beta phi_i F(nu)
  double domain_area = 0.0;     // 1^T M 1
  double boundary_mass = 0.0;   // 1^T B 1 = sum(b) = m
};

AssembledForms assemble_forms(const Mesh& mesh, const BoundaryWeight& beta,
                              const NormSpec& spec);

struct SolveOptions {
  double tol = 1e-10;   // residual tolerance, scaled by (1 + data norm)
  int max_iter = 200;
};

struct SolveDiagnostics {
  int iterations = 0;
  double residual = 0.0;
};

// v with v = 0 on the boundary whose interior energy-gradient entries match
// those of u (discrete Delta_F v = Delta_F u). Damped Newton on the convex
// objective E_F(v) - grad E_F(u)^T v.
FemField solve_dirichlet_matching(const NormSpec& spec, const FemField& u,
                                  const SolveOptions& opts = {},
                                  SolveDiagnostics* diag = nullptr);

// F-harmonic extension: boundary coefficients equal g, interior
// energy-gradient entries vanish. g is vertex-indexed; only its boundary
// entries are read.
FemField harmonic_extension(const NormSpec& spec, const Mesh& mesh,
                            const VectorXd& g, const SolveOptions& opts = {},
                            SolveDiagnostics* diag = nullptr,
                            const FemField* guess = nullptr);

// c = (1/m) int_bdry beta u F(nu); u - c satisfies the sigma constraint.
double projection_constant(const BoundaryWeight& beta, const NormSpec& spec,
                           const Mesh& mesh, const FemField& u);

}  // namespace finsler
