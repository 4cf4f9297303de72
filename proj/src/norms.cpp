#include "finsler/norms.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace finsler {

namespace {

// Smoothed-p building block G(xi) = (1-w) |xi|^p + w (|xi_1|^p + |xi_2|^p),
// so that F = G^(1/p). Positively p-homogeneous by construction.
double smoothed_G(const Vector2& xi, double p, double w) {
  const double r = xi.norm();
  return (1.0 - w) * std::pow(r, p) +
         w * (std::pow(std::abs(xi.x()), p) + std::pow(std::abs(xi.y()), p));
}

Vector2 smoothed_G_grad(const Vector2& xi, double p, double w) {
  const double r = xi.norm();
  Vector2 g = Vector2::Zero();
  if (r > 0.0) g = (1.0 - w) * p * std::pow(r, p - 2.0) * xi;
  for (int i = 0; i < 2; ++i) {
    const double x = xi[i];
    if (x != 0.0)
      g[i] += w * p * std::copysign(std::pow(std::abs(x), p - 1.0), x);
  }
  return g;
}

Matrix2 smoothed_G_hess(const Vector2& xi, double p, double w) {
  const double r = xi.norm();
  Matrix2 h = Matrix2::Zero();
  if (r > 0.0) {
    h = (1.0 - w) * p *
        (std::pow(r, p - 2.0) * Matrix2::Identity() +
         (p - 2.0) * std::pow(r, p - 4.0) * (xi * xi.transpose()));
  }
  for (int i = 0; i < 2; ++i) {
    const double ax = std::abs(xi[i]);
    if (ax > 0.0) h(i, i) += w * p * (p - 1.0) * std::pow(ax, p - 2.0);
  }
  return h;
}

}  // namespace

NormSpec NormSpec::euclidean() {
  NormSpec s;
  s.kind_ = NormKind::Euclidean;
  s.a_ = 1.0;
  s.b_ = 1.0;
  return s;
}

NormSpec NormSpec::quadratic(const Matrix2& A) {
  if ((A - A.transpose()).norm() > 1e-12 * (1.0 + A.norm()))
    throw std::invalid_argument("NormSpec: quadratic matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix2> es(A);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument(
        "NormSpec: quadratic matrix must be positive definite");
  NormSpec s;
  s.kind_ = NormKind::Quadratic;
  s.A_ = 0.5 * (A + A.transpose());
  s.a_ = std::sqrt(es.eigenvalues().minCoeff());
  s.b_ = std::sqrt(es.eigenvalues().maxCoeff());
  return s;
}

NormSpec NormSpec::smoothed_p(double p, double eps) {
  if (!(p > 1.0)) throw std::invalid_argument("NormSpec: require p > 1");
  if (!(eps >= 0.0)) throw std::invalid_argument("NormSpec: require eps >= 0");
  NormSpec s;
  s.kind_ = NormKind::SmoothedP;
  s.p_ = p;
  s.eps_ = eps;
  s.compute_growth_constants();
  return s;
}

void NormSpec::compute_growth_constants() {
  // Scan 4096 unit directions, locally refine the extremal brackets by
  // ternary search, then round outward.
  const int n = 4096;
  const double two_pi = 2.0 * M_PI;
  auto f = [this](double theta) {
    return norm_eval(*this, Vector2(std::cos(theta), std::sin(theta)));
  };
  int imin = 0, imax = 0;
  double fmin = f(0.0), fmax = fmin;
  for (int i = 1; i < n; ++i) {
    const double v = f(two_pi * i / n);
    if (v < fmin) { fmin = v; imin = i; }
    if (v > fmax) { fmax = v; imax = i; }
  }
  auto refine = [&](int i, bool minimize) {
    double lo = two_pi * (i - 1) / n, hi = two_pi * (i + 1) / n;
    for (int it = 0; it < 200; ++it) {
      const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      const bool keep_left = minimize ? (f(m1) < f(m2)) : (f(m1) > f(m2));
      if (keep_left) hi = m2; else lo = m1;
    }
    return f(0.5 * (lo + hi));
  };
  fmin = std::min(fmin, refine(imin, true));
  fmax = std::max(fmax, refine(imax, false));
  a_ = fmin * (1.0 - 1e-9);
  b_ = fmax * (1.0 + 1e-9);
}

const Matrix2& NormSpec::matrix() const {
  if (kind_ != NormKind::Quadratic)
    throw std::logic_error("NormSpec: matrix() requires the quadratic family");
  return A_;
}

double norm_eval(const NormSpec& spec, const Vector2& xi) {
  switch (spec.kind_) {
    case NormKind::Euclidean:
      return xi.norm();
    case NormKind::Quadratic:
      return std::sqrt(xi.dot(spec.A_ * xi));
    case NormKind::SmoothedP: {
      const double w = 1.0 / (1.0 + spec.eps_);
      return std::pow(smoothed_G(xi, spec.p_, w), 1.0 / spec.p_);
    }
  }
  return 0.0;
}

Vector2 norm_grad(const NormSpec& spec, const Vector2& xi) {
  if (xi.isZero(0.0))
    throw std::domain_error("norm_grad: F is not differentiable at 0");
  switch (spec.kind_) {
    case NormKind::Euclidean:
      return xi.normalized();
    case NormKind::Quadratic:
      return spec.A_ * xi / std::sqrt(xi.dot(spec.A_ * xi));
    case NormKind::SmoothedP: {
      const double p = spec.p_, w = 1.0 / (1.0 + spec.eps_);
      const double G = smoothed_G(xi, p, w);
      return (1.0 / p) * std::pow(G, 1.0 / p - 1.0) * smoothed_G_grad(xi, p, w);
    }
  }
  return Vector2::Zero();
}

Matrix2 norm_hess_F2(const NormSpec& spec, const Vector2& xi) {
  if (xi.isZero(0.0))
    throw std::domain_error("norm_hess_F2: undefined at 0");
  switch (spec.kind_) {
    case NormKind::Euclidean:
      return 2.0 * Matrix2::Identity();
    case NormKind::Quadratic:
      return 2.0 * spec.A_;
    case NormKind::SmoothedP: {
      const double p = spec.p_, w = 1.0 / (1.0 + spec.eps_);
      const double G = smoothed_G(xi, p, w);
      const Vector2 dG = smoothed_G_grad(xi, p, w);
      const Matrix2 d2G = smoothed_G_hess(xi, p, w);
      const double c = 2.0 / p;
      return c * ((c - 1.0) * std::pow(G, c - 2.0) * (dG * dG.transpose()) +
                  std::pow(G, c - 1.0) * d2G);
    }
  }
  return Matrix2::Zero();
}

Vector2 norm_grad_F2(const NormSpec& spec, const Vector2& xi) {
  if (xi.isZero(0.0)) return Vector2::Zero();
  return 2.0 * norm_eval(spec, xi) * norm_grad(spec, xi);
}

}  // namespace finsler
