#pragma once

#include <Eigen/Dense>

#include <stdexcept>

namespace finsler {

using Vector2 = Eigen::Vector2d;
using Matrix2 = Eigen::Matrix2d;

enum class NormKind { Euclidean, Quadratic, SmoothedP };

// A strongly convex, positively 1-homogeneous norm F on R^2 together with
// exact first and second derivatives and certified growth constants
//   a |xi| <= F(xi) <= b |xi|.
//
// Three families are supported:
//   euclidean    F(xi) = |xi|
//   quadratic    F(xi) = sqrt(xi . A xi),  A symmetric positive definite
//   smoothed-p   F(xi) = ( (1-w) |xi|^p + w (|xi_1|^p + |xi_2|^p) )^(1/p)
//                with blend weight w = 1/(1+eps); the isotropic part keeps
//                [F^2]_xixi positive definite away from the axes' degeneracy
//                of the pure p-norm while homogeneity stays exact.
class NormSpec {
public:
  NormSpec() = default;  // euclidean
  static NormSpec euclidean();
  static NormSpec quadratic(const Matrix2& A);
  static NormSpec smoothed_p(double p, double eps);

  NormKind kind() const { return kind_; }
  double growth_lower() const { return a_; }  // a
  double growth_upper() const { return b_; }  // b

  // Quadratic family only: the defining matrix, for exact change-of-variables
  // oracles downstream.
  const Matrix2& matrix() const;

  double p() const { return p_; }
  double eps() const { return eps_; }

private:
  void compute_growth_constants();

  NormKind kind_ = NormKind::Euclidean;
  Matrix2 A_ = Matrix2::Identity();
  double p_ = 2.0;
  double eps_ = 0.0;
  double a_ = 1.0;
  double b_ = 1.0;

  friend double norm_eval(const NormSpec&, const Vector2&);
  friend Vector2 norm_grad(const NormSpec&, const Vector2&);
  friend Matrix2 norm_hess_F2(const NormSpec&, const Vector2&);
};

// F(xi); defined for all xi, F(0) = 0.
double norm_eval(const NormSpec& spec, const Vector2& xi);

// F_xi(xi); requires xi != 0. Satisfies the Euler identity
// F_xi(xi) . xi = F(xi) and is 0-homogeneous.
Vector2 norm_grad(const NormSpec& spec, const Vector2& xi);

// Hessian of F^2 at xi != 0; symmetric with two positive eigenvalues,
// 0-homogeneous.
Matrix2 norm_hess_F2(const NormSpec& spec, const Vector2& xi);

// Gradient of F^2 at xi. Extends continuously by 0 at xi = 0
// (it equals 2 F F_xi, and F F_xi is 1-homogeneous).
Vector2 norm_grad_F2(const NormSpec& spec, const Vector2& xi);

}  // namespace finsler
