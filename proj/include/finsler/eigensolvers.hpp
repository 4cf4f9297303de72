#pragma once

#include "finsler/fem.hpp"
#include "finsler/mesh.hpp"
#include "finsler/norms.hpp"

#include <string>
#include <vector>

namespace finsler {

enum class Quantity {
  LambdaRobin,      // lambda_F(beta, Omega)
  LambdaDirichlet,  // lambda_F(Omega)
  Sigma,            // sigma_F(beta, Omega)
  MuNeumann,        // mu_F(Omega)
  QBeta,            // q_F(beta, Omega)
  QPlain            // q_F(Omega), reported for constant beta
};

std::string quantity_name(Quantity q);

struct EigenResult {
  Quantity quantity = Quantity::LambdaRobin;
  double value = 0.0;
  FemField minimizer;   // unit L2 norm (v^T M v = 1)
  int iterations = 0;
  double final_residual = 0.0;
  bool restarts_agree = true;
  // For q_value with constant beta: value / beta. NaN otherwise.
  double plain_value = std::numeric_limits<double>::quiet_NaN();
};

struct EigenOptions {
  double tol = 1e-12;         // relative residual for the linear route
  double nonlinear_tol = 1e-10;
  int max_iter = 2000;
  int restarts = 3;           // extra random restarts on the nonlinear route
  std::uint64_t seed = 0x5EED;
};

// Smallest eigenvalue of the pencil (N, M) restricted to the given active
// dofs and to the null space of the constraint functionals (c^T v = 0).
// N must be symmetric positive semi-definite on that subspace, M symmetric
// positive definite. Shift-inverted power iteration with a Rayleigh-Ritz
// acceleration subspace; residual measured on the constrained equation.
struct CoreResult {
  double value = 0.0;
  VectorXd minimizer;  // full-length, zero on inactive dofs, v^T M v = 1
  int iterations = 0;
  double residual = 0.0;
};

CoreResult solver_core(const SparseMatrix& N, const SparseMatrix& M,
                       const std::vector<VectorXd>& constraints,
                       const std::vector<int>& active_dofs,
                       const EigenOptions& opts = {});

EigenResult lambda_robin(const Mesh& mesh, const BoundaryWeight& beta,
                         const NormSpec& spec, const EigenOptions& opts = {});

EigenResult lambda_dirichlet(const Mesh& mesh, const NormSpec& spec,
                             const EigenOptions& opts = {});

EigenResult sigma(const Mesh& mesh, const BoundaryWeight& beta,
                  const NormSpec& spec, const EigenOptions& opts = {});

EigenResult mu_neumann(const Mesh& mesh, const NormSpec& spec,
                       const EigenOptions& opts = {});

// Nested minimization: outer over boundary traces, inner F-harmonic
// extension. beta_constant (if > 0) triggers the q_plain = value / beta
// report.
EigenResult q_value(const Mesh& mesh, const BoundaryWeight& beta,
                    const NormSpec& spec, const EigenOptions& opts = {},
                    double beta_constant = -1.0);

}  // namespace finsler
