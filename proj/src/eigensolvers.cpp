#include "finsler/eigensolvers.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <array>
#include <stdexcept>

namespace finsler {

std::string quantity_name(Quantity q) {
  switch (q) {
    case Quantity::LambdaRobin: return "lambda_robin";
    case Quantity::LambdaDirichlet: return "lambda_dirichlet";
    case Quantity::Sigma: return "sigma";
    case Quantity::MuNeumann: return "mu_neumann";
    case Quantity::QBeta: return "q_beta";
    case Quantity::QPlain: return "q_plain";
  }
  return "?";
}

namespace {

using Eigen::MatrixXd;

struct Reduction {
  std::vector<int> to_full;
  std::vector<int> to_reduced;  // -1 for inactive
};

Reduction make_reduction(int n_full, const std::vector<int>& active) {
  Reduction r;
  r.to_reduced.assign(n_full, -1);
  r.to_full = active;
  for (size_t i = 0; i < active.size(); ++i) r.to_reduced[active[i]] = static_cast<int>(i);
  return r;
}

SparseMatrix reduce(const SparseMatrix& A, const Reduction& red) {
  std::vector<Eigen::Triplet<double>> trips;
  for (int col = 0; col < A.outerSize(); ++col) {
    const int rc = red.to_reduced[col];
    if (rc < 0) continue;
    for (SparseMatrix::InnerIterator it(A, col); it; ++it) {
      const int rr = red.to_reduced[static_cast<int>(it.row())];
      if (rr >= 0) trips.emplace_back(rr, rc, it.value());
    }
  }
  SparseMatrix R(red.to_full.size(), red.to_full.size());
  R.setFromTriplets(trips.begin(), trips.end());
  return R;
}

VectorXd reduce(const VectorXd& v, const Reduction& red) {
  VectorXd r(red.to_full.size());
  for (size_t i = 0; i < red.to_full.size(); ++i) r[i] = v[red.to_full[i]];
  return r;
}

VectorXd expand(const VectorXd& v, const Reduction& red, int n_full) {
  VectorXd full = VectorXd::Zero(n_full);
  for (size_t i = 0; i < red.to_full.size(); ++i) full[red.to_full[i]] = v[i];
  return full;
}

// Euclidean projection onto the null space of the constraint columns.
void project_constraints(const MatrixXd& C, const Eigen::LLT<MatrixXd>& CtC,
                         VectorXd& v) {
  if (C.cols() == 0) return;
  v -= C * CtC.solve(C.transpose() * v);
}

}  // namespace

CoreResult solver_core_with_guess(const SparseMatrix& N, const SparseMatrix& M,
                                  const std::vector<VectorXd>& constraints,
                                  const std::vector<int>& active_dofs,
                                  const EigenOptions& opts,
                                  const VectorXd* guess) {
  const int n_full = static_cast<int>(N.rows());
  const Reduction red = make_reduction(n_full, active_dofs);
  const int n = static_cast<int>(active_dofs.size());
  if (n < 2) throw std::invalid_argument("solver_core: need at least 2 active dofs");

  const SparseMatrix Nr = reduce(N, red);
  const SparseMatrix Mr = reduce(M, red);
  MatrixXd C(n, static_cast<int>(constraints.size()));
  for (size_t k = 0; k < constraints.size(); ++k) C.col(k) = reduce(constraints[k], red);
  Eigen::LLT<MatrixXd> CtC;
  if (C.cols() > 0) {
    CtC.compute(C.transpose() * C);
    if (CtC.info() != Eigen::Success)
      throw std::invalid_argument("solver_core: degenerate constraints");
  }

  // Shift keeps the factored operator positive definite when N is only
  // semi-definite (the constraints remove its null space from the search
  // space, not from the matrix).
  double trn = 0.0, trm = 0.0;
  for (int i = 0; i < n; ++i) { trn += Nr.coeff(i, i); trm += Mr.coeff(i, i); }
  double gamma = 1e-6 * trn / trm;
  Eigen::SimplicialLDLT<SparseMatrix> S;
  for (int attempt = 0; attempt < 6; ++attempt) {
    SparseMatrix shifted = Nr + gamma * Mr;
    S.compute(shifted);
    if (S.info() == Eigen::Success) break;
    gamma *= 100.0;
  }
  if (S.info() != Eigen::Success)
    throw std::runtime_error("solver_core: factorization failed");

  MatrixXd Wc(n, C.cols());
  Eigen::LLT<MatrixXd> Gc;
  if (C.cols() > 0) {
    for (int k = 0; k < C.cols(); ++k) Wc.col(k) = S.solve(C.col(k));
    Gc.compute(C.transpose() * Wc);
  }
  // Inverse application restricted to the constraint null space (Lagrange
  // multipliers on the shifted operator).
  auto apply_inverse = [&](const VectorXd& rhs) {
    VectorXd w = S.solve(rhs);
    if (C.cols() > 0) w -= Wc * Gc.solve(C.transpose() * w);
    return w;
  };
  auto m_norm = [&](const VectorXd& v) { return std::sqrt(v.dot(Mr * v)); };

  // Backward-error normalization for the residual: eta = ||Nv - rho*Mv|| /
  // ((||N|| + |rho|*||M||) * ||v||). Unlike ||Nv|| + |rho|*||Mv||, the
  // denominator does not collapse at the eigenvector, so the attainable floor
  // is near machine precision.
  auto inf_norm = [n](const SparseMatrix& A) {
    VectorXd row_sums = VectorXd::Zero(n);
    for (int col = 0; col < A.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(A, col); it; ++it)
        row_sums[it.row()] += std::abs(it.value());
    return row_sums.maxCoeff();
  };
  const double norm_N = inf_norm(Nr);
  const double norm_M = inf_norm(Mr);

  // Block inverse iteration with Rayleigh-Ritz acceleration (LOBPCG-style).
  // A block of 3 resolves the eigenvalue clusters that occur on symmetric
  // domains (double sigma/Neumann modes); a single-vector iteration cannot
  // drive the residual of a clustered pair below ~sqrt(eps * gap).
  const int blk = std::min<int>(3, n - static_cast<int>(C.cols()) - 1) > 0
                      ? std::min<int>(3, n - static_cast<int>(C.cols()) - 1)
                      : 1;
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> dist;
  MatrixXd X(n, blk);
  for (int j = 0; j < blk; ++j)
    for (int i = 0; i < n; ++i) X(i, j) = dist(rng);
  if (guess) {
    VectorXd g = reduce(*guess, red);
    if (g.norm() > 0.0) X.col(0) = g;
  }
  for (int j = 0; j < blk; ++j) {
    VectorXd c = X.col(j);
    project_constraints(C, CtC, c);
    X.col(j) = c / m_norm(c);
  }

  MatrixXd P(n, 0);
  double rho = std::numeric_limits<double>::quiet_NaN();
  double rel_res = std::numeric_limits<double>::infinity();
  double best_res = std::numeric_limits<double>::infinity();
  int best_iter = 0;
  VectorXd v;
  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    v = X.col(0);
    const VectorXd Nv = Nr * v;
    rho = v.dot(Nv);
    VectorXd r = Nv - rho * (Mr * v);
    project_constraints(C, CtC, r);
    rel_res = r.norm() / ((norm_N + std::abs(rho) * norm_M) * v.norm());
    if (std::getenv("FINSLER_TRACE"))
      std::fprintf(stderr, "iter %d rho=%.16g relres=%.3e\n", iter, rho, rel_res);
    if (rel_res <= opts.tol) break;
    if (rel_res < 0.5 * best_res) { best_res = rel_res; best_iter = iter; }
    // Clustered eigenvalues stall the block iteration at a small but nonzero
    // residual; hand over to the shifted polish below.
    if (rel_res <= 1e-6 && iter - best_iter >= 10) break;

    MatrixXd W(n, blk);
    for (int j = 0; j < blk; ++j) W.col(j) = apply_inverse(Mr * X.col(j));

    // M-orthonormal basis of span{X, W, P} by modified Gram-Schmidt with a
    // drop tolerance relative to each candidate's own size: near convergence
    // the useful correction directions are tiny in absolute terms.
    std::vector<VectorXd> basis;
    auto push = [&](const VectorXd& cand) {
      const double nc = m_norm(cand);
      if (!(nc > 0.0)) return;
      VectorXd b = cand;
      for (const auto& q : basis) b -= q.dot(Mr * b) * q;
      for (const auto& q : basis) b -= q.dot(Mr * b) * q;  // re-orthogonalize
      const double nb = m_norm(b);
      if (nb > 1e-12 * nc) basis.push_back(b / nb);
    };
    for (int j = 0; j < blk; ++j) push(X.col(j));
    for (int j = 0; j < blk; ++j) push(W.col(j));
    for (int j = 0; j < P.cols(); ++j) push(P.col(j));

    const int m = static_cast<int>(basis.size());
    MatrixXd A(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j <= i; ++j)
        A(i, j) = A(j, i) = basis[i].dot(Nr * basis[j]);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(A);

    const int keep = std::min(blk, m);
    MatrixXd Xnew(n, keep);
    for (int k = 0; k < keep; ++k) {
      VectorXd xk = VectorXd::Zero(n);
      for (int i = 0; i < m; ++i) xk += es.eigenvectors()(i, k) * basis[i];
      project_constraints(C, CtC, xk);  // guard against drift
      Xnew.col(k) = xk / m_norm(xk);
    }
    P.resize(n, keep);
    for (int k = 0; k < keep; ++k) {
      P.col(k) = Xnew.col(k);
      if (k < X.cols()) P.col(k) -= X.col(k);
    }
    X = Xnew;
  }
  if (rel_res > opts.tol && rel_res <= 1e-6) {
    // Shifted-inverse polish: with s slightly below rho, (N - sM)^{-1} M
    // amplifies the target eigenvector against the rest of its cluster and
    // resolves the rotation ambiguity that stalls the block iteration.
    const double s = rho - std::max(1e-9 * std::abs(rho), 1e-300);
    SparseMatrix shifted = Nr - s * Mr;
    Eigen::SparseLU<SparseMatrix> T;
    T.compute(shifted);
    if (T.info() == Eigen::Success) {
      MatrixXd Wp(n, C.cols());
      Eigen::PartialPivLU<MatrixXd> Gp;
      if (C.cols() > 0) {
        for (int k = 0; k < C.cols(); ++k) Wp.col(k) = T.solve(VectorXd(C.col(k)));
        Gp.compute(MatrixXd(C.transpose() * Wp));
      }
      for (int polish = 0; polish < 8 && rel_res > opts.tol; ++polish) {
        VectorXd w = T.solve(VectorXd(Mr * v));
        if (C.cols() > 0) w -= Wp * Gp.solve(VectorXd(C.transpose() * w));
        project_constraints(C, CtC, w);
        const double nw = m_norm(w);
        if (!(nw > 0.0) || !w.allFinite()) break;
        w /= nw;
        const VectorXd Nw = Nr * w;
        const double rho_w = w.dot(Nw);
        if (!(rho_w <= rho + 1e-9 * std::abs(rho))) break;  // left the cluster
        VectorXd r = Nw - rho_w * (Mr * w);
        project_constraints(C, CtC, r);
        const double res_w = r.norm() / ((norm_N + std::abs(rho_w) * norm_M) * w.norm());
        v = w;
        rho = rho_w;
        rel_res = res_w;
        if (std::getenv("FINSLER_TRACE"))
          std::fprintf(stderr, "polish %d rho=%.16g relres=%.3e\n", polish, rho, rel_res);
      }
    }
  }
  if (rel_res > opts.tol)
    throw std::runtime_error("solver_core: no convergence, relative residual " +
                             std::to_string(rel_res));

  CoreResult out;
  out.value = rho;
  out.minimizer = expand(v, red, n_full);
  out.iterations = iter;
  out.residual = rel_res;
  return out;
}

CoreResult solver_core(const SparseMatrix& N, const SparseMatrix& M,
                       const std::vector<VectorXd>& constraints,
                       const std::vector<int>& active_dofs,
                       const EigenOptions& opts) {
  return solver_core_with_guess(N, M, constraints, active_dofs, opts, nullptr);
}

namespace {

std::vector<int> all_dofs(const Mesh& mesh) {
  std::vector<int> v(mesh.num_vertices());
  for (int i = 0; i < mesh.num_vertices(); ++i) v[i] = i;
  return v;
}

void fix_sign(const SparseMatrix& M, VectorXd& v) {
  const double mean = (M * v).sum();
  if (mean < 0.0 || (mean == 0.0 && v[0] < 0.0)) v = -v;
  if (std::abs(mean) < 1e-12 * v.cwiseAbs().maxCoeff()) {
    // zero-mean quantities: fix the largest-magnitude coefficient positive
    int imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0) v = -v;
  }
}

// Rayleigh quotient of the defining (possibly nonlinear) forms.
double defining_quotient(const NormSpec& spec, const Mesh& mesh,
                         const SparseMatrix* B, const SparseMatrix& M,
                         const VectorXd& v) {
  const FemField f(mesh, v);
  double num = energy(spec, f);
  if (B) num += v.dot(*B * v);
  return num / v.dot(M * v);
}

// Minimizes the (nonlinear for smoothed-p norms) Rayleigh quotient
//   [ E_F(v) + v^T B v ] / v^T M v
// over the active dofs subject to c^T v = 0. For quadratic norms one exact
// linear solve; otherwise a self-consistent iteration on the secant
// stiffness, safeguarded by Armijo backtracking on the true quotient, with
// seeded random restarts.
EigenResult minimize_quotient(Quantity which, const NormSpec& spec,
                              const Mesh& mesh, const SparseMatrix* B,
                              const SparseMatrix& M,
                              const std::vector<VectorXd>& constraints,
                              const std::vector<int>& active,
                              const EigenOptions& opts) {
  const int nv = mesh.num_vertices();
  EigenResult result;
  result.quantity = which;

  auto numerator_matrix = [&](const VectorXd& v) {
    SparseMatrix N = 0.5 * energy_hessian(spec, FemField(mesh, v));
    if (B) N = N + *B;
    return N;
  };

  if (spec.kind() != NormKind::SmoothedP) {
    const SparseMatrix N = numerator_matrix(VectorXd::Zero(nv));
    CoreResult core = solver_core(N, M, constraints, active, opts);
    fix_sign(M, core.minimizer);
    result.value = defining_quotient(spec, mesh, B, M, core.minimizer);
    result.minimizer = FemField(mesh, core.minimizer);
    result.iterations = core.iterations;
    result.final_residual = core.residual;
    result.restarts_agree = true;
    return result;
  }

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> dist;
  std::vector<double> restart_values;
  VectorXd best;
  double best_value = std::numeric_limits<double>::infinity();
  int total_iters = 0;
  double best_residual = 0.0;

  for (int restart = 0; restart <= opts.restarts; ++restart) {
    VectorXd v;
    if (restart == 0) {
      // isotropic-secant warm start
      const SparseMatrix N0 = numerator_matrix(VectorXd::Zero(nv));
      v = solver_core(N0, M, constraints, active, opts).minimizer;
    } else {
      v = VectorXd::Zero(nv);
      for (int i : active) v[i] = dist(rng);
    }
    {
      // feasibility: Euclidean projection onto the constraint null space
      for (const auto& c : constraints) {
        VectorXd cr = VectorXd::Zero(nv);
        for (int i : active) cr[i] = c[i];
        const double cn2 = cr.squaredNorm();
        if (cn2 > 0.0) v -= (cr.dot(v) / cn2) * cr;
      }
      v /= std::sqrt(v.dot(M * v));
    }

    double q = defining_quotient(spec, mesh, B, M, v);
    double residual = std::numeric_limits<double>::infinity();
    int iter = 0;
    for (; iter < 200; ++iter) {
      // residual of the nonlinear eigen-equation
      VectorXd g = energy_gradient(spec, FemField(mesh, v));
      if (B) g += 2.0 * (*B * v);
      const double scale = g.lpNorm<Eigen::Infinity>() +
                           2.0 * std::abs(q) * (M * v).lpNorm<Eigen::Infinity>();
      g -= 2.0 * q * (M * v);
      VectorXd gr = VectorXd::Zero(nv);
      for (int i : active) gr[i] = g[i];
      for (const auto& c : constraints) {
        VectorXd cr = VectorXd::Zero(nv);
        for (int i : active) cr[i] = c[i];
        const double cn2 = cr.squaredNorm();
        if (cn2 > 0.0) gr -= (cr.dot(gr) / cn2) * cr;
      }
      residual = gr.lpNorm<Eigen::Infinity>();
      if (residual <= opts.nonlinear_tol * (1.0 + scale)) break;

      const SparseMatrix Nk = numerator_matrix(v);
      CoreResult core = solver_core_with_guess(Nk, M, constraints, active, opts, &v);
      VectorXd cand = core.minimizer;
      if (v.dot(M * cand) < 0.0) cand = -cand;

      // Armijo backtracking on the true quotient along the segment to the
      // frozen-coefficient minimizer.
      double t = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 40; ++ls) {
        VectorXd trial = v + t * (cand - v);
        trial /= std::sqrt(trial.dot(M * trial));
        const double qt = defining_quotient(spec, mesh, B, M, trial);
        if (qt < q - 1e-15 * std::abs(q) || (ls == 0 && qt <= q)) {
          v = trial;
          q = qt;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        // projected gradient fallback
        double tg = 1.0 / (1.0 + gr.norm());
        bool moved = false;
        for (int ls = 0; ls < 40; ++ls) {
          VectorXd trial = v - tg * gr;
          trial /= std::sqrt(trial.dot(M * trial));
          const double qt = defining_quotient(spec, mesh, B, M, trial);
          if (qt < q) { v = trial; q = qt; moved = true; break; }
          tg *= 0.5;
        }
        if (!moved) break;  // stationary up to line-search resolution
      }
    }
    total_iters += iter;
    restart_values.push_back(q);
    if (q < best_value) {
      best_value = q;
      best = v;
      best_residual = residual;
    }
  }

  result.restarts_agree = true;
  for (double rv : restart_values)
    if (std::abs(rv - best_value) > 1e-6 * std::abs(best_value))
      result.restarts_agree = false;

  fix_sign(M, best);
  result.value = defining_quotient(spec, mesh, B, M, best);
  result.minimizer = FemField(mesh, best);
  result.iterations = total_iters;
  result.final_residual = best_residual;
  return result;
}

}  // namespace

EigenResult lambda_robin(const Mesh& mesh, const BoundaryWeight& beta,
                         const NormSpec& spec, const EigenOptions& opts) {
  const AssembledForms forms = assemble_forms(mesh, beta, spec);
  return minimize_quotient(Quantity::LambdaRobin, spec, mesh, &forms.boundary,
                           forms.mass, {}, all_dofs(mesh), opts);
}

EigenResult lambda_dirichlet(const Mesh& mesh, const NormSpec& spec,
                             const EigenOptions& opts) {
  const AssembledForms forms =
      assemble_forms(mesh, BoundaryWeight(mesh, 1.0), spec);
  return minimize_quotient(Quantity::LambdaDirichlet, spec, mesh, nullptr,
                           forms.mass, {}, mesh.interior_vertex_list(), opts);
}

EigenResult sigma(const Mesh& mesh, const BoundaryWeight& beta,
                  const NormSpec& spec, const EigenOptions& opts) {
  const AssembledForms forms = assemble_forms(mesh, beta, spec);
  return minimize_quotient(Quantity::Sigma, spec, mesh, nullptr, forms.mass,
                           {forms.boundary_load}, all_dofs(mesh), opts);
}

EigenResult mu_neumann(const Mesh& mesh, const NormSpec& spec,
                       const EigenOptions& opts) {
  const AssembledForms forms =
      assemble_forms(mesh, BoundaryWeight(mesh, 1.0), spec);
  const VectorXd mean_functional =
      forms.mass * VectorXd::Ones(mesh.num_vertices());
  return minimize_quotient(Quantity::MuNeumann, spec, mesh, nullptr, forms.mass,
                           {mean_functional}, all_dofs(mesh), opts);
}

namespace {

// Dense trace eigenproblem for the frozen stiffness K: minimize
// g^T Btilde g / (H g)^T M (H g) where H is the K-harmonic extension of the
// trace g.
struct TraceSolve {
  double value = 0.0;
  VectorXd trace;       // over boundary vertices (reduced)
  VectorXd extension;   // full field
  double residual = 0.0;
};

TraceSolve trace_eigenproblem(const Mesh& mesh, const SparseMatrix& K,
                              const Eigen::MatrixXd& Btilde,
                              const SparseMatrix& M,
                              const std::vector<int>& bverts) {
  const int nv = mesh.num_vertices();
  const int nb = static_cast<int>(bverts.size());
  const Reduction red_i = make_reduction(nv, mesh.interior_vertex_list());
  const SparseMatrix Kii = reduce(K, red_i);
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(Kii);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("q_value: interior stiffness factorization failed");

  Eigen::MatrixXd H(nv, nb);
  const int ni = static_cast<int>(red_i.to_full.size());
  for (int j = 0; j < nb; ++j) {
    VectorXd gfull = VectorXd::Zero(nv);
    gfull[bverts[j]] = 1.0;
    VectorXd rhs(ni);
    const VectorXd Kg = K * gfull;
    for (int i = 0; i < ni; ++i) rhs[i] = -Kg[red_i.to_full[i]];
    const VectorXd hi = ldlt.solve(rhs);
    for (int i = 0; i < ni; ++i) gfull[red_i.to_full[i]] = hi[i];
    H.col(j) = gfull;
  }
  Eigen::MatrixXd MH(nv, nb);
  for (int j = 0; j < nb; ++j) MH.col(j) = M * H.col(j);
  const Eigen::MatrixXd D = H.transpose() * MH;

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Btilde, D);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("q_value: dense trace eigensolve failed");

  TraceSolve out;
  out.value = es.eigenvalues()(0);
  out.trace = es.eigenvectors().col(0);
  out.extension = H * out.trace;
  const VectorXd r = Btilde * out.trace - out.value * (D * out.trace);
  out.residual = r.norm() / ((Btilde * out.trace).norm() +
                             std::abs(out.value) * (D * out.trace).norm());
  return out;
}

}  // namespace

EigenResult q_value(const Mesh& mesh, const BoundaryWeight& beta,
                    const NormSpec& spec, const EigenOptions& opts,
                    double beta_constant) {
  const int nv = mesh.num_vertices();
  const AssembledForms forms = assemble_forms(mesh, beta, spec);
  const std::vector<int> bverts = mesh.boundary_vertex_list();
  const int nb = static_cast<int>(bverts.size());
  Eigen::MatrixXd Btilde = Eigen::MatrixXd::Zero(nb, nb);
  {
    const Reduction red_b = make_reduction(nv, bverts);
    for (int col = 0; col < forms.boundary.outerSize(); ++col) {
      const int rc = red_b.to_reduced[col];
      if (rc < 0) continue;
      for (SparseMatrix::InnerIterator it(forms.boundary, col); it; ++it) {
        const int rr = red_b.to_reduced[static_cast<int>(it.row())];
        if (rr >= 0) Btilde(rr, rc) += it.value();
      }
    }
  }

  EigenResult result;
  result.quantity = Quantity::QBeta;

  auto finish = [&](const VectorXd& extension, int iters, double residual,
                    bool agree) {
    VectorXd h = extension;
    fix_sign(forms.mass, h);
    h /= std::sqrt(h.dot(forms.mass * h));
    result.minimizer = FemField(mesh, h);
    result.value = h.dot(forms.boundary * h) / h.dot(forms.mass * h);
    result.iterations = iters;
    result.final_residual = residual;
    result.restarts_agree = agree;
    if (beta_constant > 0.0) result.plain_value = result.value / beta_constant;
  };

  if (spec.kind() != NormKind::SmoothedP) {
    const SparseMatrix K =
        energy_hessian(spec, FemField::zero(mesh));
    const TraceSolve ts = trace_eigenproblem(mesh, K, Btilde, forms.mass, bverts);
    finish(ts.extension, 1, ts.residual, true);
    return result;
  }

  // Smoothed-p: self-consistent outer iteration over traces with nonlinear
  // F-harmonic inner extensions, Armijo-safeguarded, with random restarts.
  // The frozen trace eigenproblem is handled matrix-free: the extension
  // operator H and its adjoint are two interior backsolves, so the inner
  // update is a handful of inverse-power steps instead of a dense solve.
  const Reduction red_i = make_reduction(nv, mesh.interior_vertex_list());
  const int ni = static_cast<int>(red_i.to_full.size());
  const Eigen::LLT<Eigen::MatrixXd> Bllt(Btilde);

  auto quotient_of_trace = [&](const VectorXd& g_reduced, VectorXd* h_out,
                               const FemField* guess) {
    VectorXd gfull = VectorXd::Zero(nv);
    for (int j = 0; j < nb; ++j) gfull[bverts[j]] = g_reduced[j];
    SolveOptions ext_opts;
    ext_opts.tol = 1e-13;  // keeps quotient noise below line-search decreases
    const FemField h =
        harmonic_extension(spec, mesh, gfull, ext_opts, nullptr, guess);
    if (h_out) *h_out = h.coeffs;
    return g_reduced.dot(Btilde * g_reduced) /
           h.coeffs.dot(forms.mass * h.coeffs);
  };

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> dist;
  std::vector<double> restart_values;
  VectorXd best_h;
  double best_q = std::numeric_limits<double>::infinity();
  double best_res = 0.0;
  int total_iters = 0;

  for (int restart = 0; restart <= opts.restarts; ++restart) {
    VectorXd g(nb);
    if (restart == 0) {
      const SparseMatrix K0 = energy_hessian(spec, FemField::zero(mesh));
      g = trace_eigenproblem(mesh, K0, Btilde, forms.mass, bverts).trace;
    } else {
      for (int j = 0; j < nb; ++j) g[j] = dist(rng);
    }
    // normalize the trace (extension is 1-homogeneous in g)
    double gn = std::sqrt(g.dot(Btilde * g));
    g /= gn;
    VectorXd h;
    double q = quotient_of_trace(g, &h, nullptr);
    double res = std::numeric_limits<double>::infinity();
    // Projected, normalized gradient descent with Armijo steps, accelerated
    // by L-BFGS curvature pairs in the Btilde metric. The quotient's exact
    // gradient is cheap: dh/dg is the extension operator of the frozen
    // stiffness (Hess E_F = K_w by 2-homogeneity), so one adjoint backsolve
    // yields d(h^T M h)/dg.
    std::vector<VectorXd> mem_s, mem_y;
    VectorXd grad_prev, g_prev;
    int stall = 0;
    int iter = 0;
    for (; iter < 200; ++iter) {
      const SparseMatrix Kw = energy_hessian(spec, FemField(mesh, h));
      const SparseMatrix Kii = reduce(Kw, red_i);
      Eigen::SimplicialLDLT<SparseMatrix> ldlt(Kii);
      if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("q_value: interior stiffness factorization failed");
      // adjoint of the extension: (H^T y)_j = y_bj - (K_bi Kii^{-1} y_i)_j
      auto extend_adjoint = [&](const VectorXd& y) {
        VectorXd yi(ni);
        for (int i = 0; i < ni; ++i) yi[i] = y[red_i.to_full[i]];
        const VectorXd zi = ldlt.solve(yi);
        VectorXd zfull = VectorXd::Zero(nv);
        for (int i = 0; i < ni; ++i) zfull[red_i.to_full[i]] = zi[i];
        const VectorXd Kz = Kw * zfull;
        VectorXd out(nb);
        for (int j = 0; j < nb; ++j) out[j] = y[bverts[j]] - Kz[bverts[j]];
        return out;
      };

      const double den = h.dot(forms.mass * h);
      VectorXd grad =
          (2.0 / den) * (Btilde * g - q * extend_adjoint(forms.mass * h));
      // project out the scaling direction (quotient is 0-homogeneous)
      grad -= (grad.dot(g) / g.dot(Btilde * g)) * (Btilde * g);
      const double gnorm2 = grad.dot(Bllt.solve(grad));
      res = std::sqrt(std::max(gnorm2, 0.0)) / (2.0 * std::abs(q) + 1e-300);
      if (std::getenv("FINSLER_TRACE"))
        std::fprintf(stderr, "q-lbfgs %d q=%.16g res=%.3e\n", iter, q, res);
      if (res <= 1e-10) break;

      if (grad_prev.size() > 0) {
        VectorXd sk = g - g_prev, yk = grad - grad_prev;
        if (sk.dot(yk) > 1e-12 * sk.norm() * yk.norm()) {
          mem_s.push_back(std::move(sk));
          mem_y.push_back(std::move(yk));
          if (mem_s.size() > 10) {
            mem_s.erase(mem_s.begin());
            mem_y.erase(mem_y.begin());
          }
        }
      }
      g_prev = g;
      grad_prev = grad;

      // two-loop recursion with Btilde^{-1} as the base metric
      VectorXd dir = grad;
      const int mlen = static_cast<int>(mem_s.size());
      std::vector<double> alpha(mlen);
      for (int k = mlen - 1; k >= 0; --k) {
        const double rho_k = 1.0 / mem_y[k].dot(mem_s[k]);
        alpha[k] = rho_k * mem_s[k].dot(dir);
        dir -= alpha[k] * mem_y[k];
      }
      dir = Bllt.solve(dir);
      if (mlen > 0) {
        const double gamma = mem_s.back().dot(mem_y.back()) /
                             mem_y.back().dot(Bllt.solve(mem_y.back()));
        dir *= gamma;
      }
      for (int k = 0; k < mlen; ++k) {
        const double rho_k = 1.0 / mem_y[k].dot(mem_s[k]);
        const double beta_k = rho_k * mem_y[k].dot(dir);
        dir += (alpha[k] - beta_k) * mem_s[k];
      }
      dir = -dir;
      if (dir.dot(grad) >= 0.0) dir = -Bllt.solve(grad);

      const double slope = dir.dot(grad);
      const double slack = 1e-14 * (std::abs(q) + 1.0);
      double t = 1.0;
      double qt = q;
      VectorXd ht = h, gt = g;
      const FemField hfield(mesh, h);
      bool accepted = false;
      for (int ls = 0; ls < 40; ++ls) {
        gt = g + t * dir;
        const double gtn = std::sqrt(gt.dot(Btilde * gt));
        gt /= gtn;
        qt = quotient_of_trace(gt, &ht, &hfield);
        if (qt <= q + 1e-4 * t * slope + slack) { accepted = true; break; }
        t *= 0.5;
      }
      if (!accepted) break;
      stall = (q - qt <= 1e-13 * (std::abs(q) + 1.0)) ? stall + 1 : 0;
      g = gt;
      h = ht;
      q = qt;
      if (stall >= 3) break;  // progress below quotient roundoff
    }
    total_iters += iter;
    restart_values.push_back(q);
    if (q < best_q) { best_q = q; best_h = h; best_res = res; }
  }

  bool agree = true;
  for (double rv : restart_values)
    if (std::abs(rv - best_q) > 1e-6 * std::abs(best_q)) agree = false;

  finish(best_h, total_iters, best_res, agree);
  return result;
}

}  // namespace finsler
