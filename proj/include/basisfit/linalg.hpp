#pragma once

// Dense SPD factorization and solves, plus the reverse-mode rule for x = A^{-1} b.
// Matrices here are small (total basis channels + 1), so plain unpivoted
// Cholesky is used.

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "basisfit/error.hpp"

namespace basisfit::linalg {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Pivots at or below this value abort the factorization.
inline constexpr double kPivotFloor = 1e-300;

template <typename Scalar = double>
class CholeskyFactor {
 public:
  CholeskyFactor() = default;
  explicit CholeskyFactor(Matrix<Scalar> lower) : lower_(std::move(lower)) {}

  Eigen::Index dim() const { return lower_.rows(); }
  const Matrix<Scalar>& lower() const { return lower_; }

  /// L L^T
  Matrix<Scalar> reconstruct() const { return lower_ * lower_.transpose(); }

 private:
  Matrix<Scalar> lower_;
};

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& a, typename Derived::RealScalar tol = 0) {
  if (a.rows() != a.cols()) return false;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = j + 1; i < a.rows(); ++i)
      if (std::abs(a(i, j) - a(j, i)) > tol) return false;
  return true;
}

/// Lower-triangular L with L L^T = a. Only the lower triangle of `a` is read.
template <typename Derived>
CholeskyFactor<typename Derived::Scalar> cholesky(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = a.rows();
  if (n < 1 || a.cols() != n)
    throw Error(ErrorCode::DimensionMismatch,
                "cholesky expects a non-empty square matrix, got " + std::to_string(a.rows()) +
                    "x" + std::to_string(a.cols()));

  Matrix<Scalar> l = Matrix<Scalar>::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Scalar diag = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > Scalar(kPivotFloor))) throw NotPositiveDefinite(static_cast<long>(j));
    const Scalar ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      Scalar v = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / ljj;
    }
  }
  return CholeskyFactor<Scalar>(std::move(l));
}

/// Solves (L L^T) x = rhs by forward then back substitution.
template <typename Scalar, typename Derived>
Vector<Scalar> solve_spd(const CholeskyFactor<Scalar>& factor,
                         const Eigen::MatrixBase<Derived>& rhs) {
  const Eigen::Index n = factor.dim();
  if (rhs.size() != n)
    throw Error(ErrorCode::DimensionMismatch, "rhs length " + std::to_string(rhs.size()) +
                                                  " does not match factor dim " +
                                                  std::to_string(n));
  const auto& l = factor.lower();
  Vector<Scalar> y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar v = rhs(i);
    for (Eigen::Index k = 0; k < i; ++k) v -= l(i, k) * y(k);
    y(i) = v / l(i, i);
  }
  Vector<Scalar> x(n);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    Scalar v = y(i);
    for (Eigen::Index k = i + 1; k < n; ++k) v -= l(k, i) * x(k);
    x(i) = v / l(i, i);
  }
  return x;
}

template <typename Scalar>
struct SolveGradients {
  Matrix<Scalar> grad_a;  // symmetrized
  Vector<Scalar> grad_rhs;
};

/// Reverse-mode rule for x = A^{-1} rhs with A constrained symmetric:
/// grad_rhs = A^{-1} grad_x, grad_a = sym(-grad_rhs x^T).
template <typename Scalar, typename DerivedX, typename DerivedG>
SolveGradients<Scalar> solve_spd_backward(const CholeskyFactor<Scalar>& factor,
                                          const Eigen::MatrixBase<DerivedX>& x,
                                          const Eigen::MatrixBase<DerivedG>& grad_x) {
  if (x.size() != factor.dim() || grad_x.size() != factor.dim())
    throw Error(ErrorCode::DimensionMismatch, "solve_spd_backward: vector length mismatch");
  SolveGradients<Scalar> out;
  out.grad_rhs = solve_spd(factor, grad_x);
  const Matrix<Scalar> g = -out.grad_rhs * x.transpose();
  out.grad_a = Scalar(0.5) * (g + g.transpose());
  return out;
}

template <typename DerivedA, typename DerivedX, typename DerivedG>
SolveGradients<typename DerivedA::Scalar> solve_spd_backward(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedX>& x,
    const Eigen::MatrixBase<DerivedG>& grad_x) {
  return solve_spd_backward(cholesky(a), x, grad_x);
}

}  // namespace basisfit::linalg
