#pragma once

// Independent reference implementations used only by the tests. Nothing here calls
// into the library's solver path.

#include <Eigen/Core>
#include <Eigen/QR>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

namespace oracle {

using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using LVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

/// Dense inverse by Gauss-Jordan elimination with partial pivoting, in long double.
inline LMatrix gauss_jordan_inverse(LMatrix a) {
  const Eigen::Index n = a.rows();
  LMatrix inv = LMatrix::Identity(n, n);
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index piv = col;
    for (Eigen::Index r = col + 1; r < n; ++r)
      if (std::fabs(a(r, col)) > std::fabs(a(piv, col))) piv = r;
    if (a(piv, col) == 0.0L) throw std::runtime_error("singular matrix in Gauss-Jordan oracle");
    a.row(col).swap(a.row(piv));
    inv.row(col).swap(inv.row(piv));
    const long double p = a(col, col);
    a.row(col) /= p;
    inv.row(col) /= p;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == col) continue;
      const long double f = a(r, col);
      if (f == 0.0L) continue;
      a.row(r) -= f * a.row(col);
      inv.row(r) -= f * inv.row(col);
    }
  }
  return inv;
}

/// (lambda I + B^T B)^{-1} B^T t through the explicit inverse.
inline Eigen::VectorXd ridge_weights(const Eigen::MatrixXd& basis, const Eigen::VectorXd& targets, double lambda) {
  const LMatrix b = basis.cast<long double>();
  const LMatrix a = b.transpose() * b + static_cast<long double>(lambda) * LMatrix::Identity(b.cols(), b.cols());
  const LVector w = gauss_jordan_inverse(a) * (b.transpose() * targets.cast<long double>());
  return w.cast<double>();
}

inline double rel_err(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  const double scale = want.cwiseAbs().maxCoeff();
  const double diff = (got - want).cwiseAbs().maxCoeff();
  return scale == 0.0 ? diff : diff / scale;
}

inline Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

/// M^T M + I for a seeded Gaussian M.
inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index n) {
  const Eigen::MatrixXd m = gaussian(rng, n, n);
  return m.transpose() * m + Eigen::MatrixXd::Identity(n, n);
}

/// Q diag(lambda_i) Q^T with eigenvalues log-spaced from 1 down to 1/cond.
inline Eigen::MatrixXd spd_with_condition(std::mt19937_64& rng, Eigen::Index n, double cond) {
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian(rng, n, n)).householderQ();
  Eigen::VectorXd ev(n);
  for (Eigen::Index i = 0; i < n; ++i)
    ev(i) = std::pow(cond, -static_cast<double>(i) / static_cast<double>(std::max<Eigen::Index>(n - 1, 1)));
  Eigen::MatrixXd a = q * ev.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

}  // namespace oracle
