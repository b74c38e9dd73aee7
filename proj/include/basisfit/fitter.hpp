#pragma once

// Least-squares fitting head: per-sample basis rows -> weights w such that
// g(w^T b_i) matches the sparse depths s_i.
//
//   linear stage:  w = (lambda I + B^T B)^{-1} B^T t,  t_i = g^{-1}(s_i)
//   refinement:    fixed number of Gauss-Newton steps on r_i = g(w^T b_i) - s_i with
//                  statistical weights 1/sigma_i^2 and Huber IRLS weights
//                  min(1, delta / |r_i / sigma_i|). lambda also damps every step.

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "basisfit/activation.hpp"
#include "basisfit/grid.hpp"

namespace basisfit {

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// N x (M+1) design matrix. Column 0 is the bias and must be exactly 1.
class BasisStack {
 public:
  explicit BasisStack(Eigen::MatrixXd rows);

  /// Prepends the bias column to an N x M feature matrix.
  static BasisStack with_bias(const Eigen::MatrixXd& features);

  Eigen::Index n_samples() const { return rows_.rows(); }
  Eigen::Index n_channels() const { return rows_.cols() - 1; }
  Eigen::Index dim() const { return rows_.cols(); }
  const Eigen::MatrixXd& rows() const { return rows_; }

 private:
  Eigen::MatrixXd rows_;
};

struct SparseDepthSet {
  Eigen::VectorXd depths;               // s_i [m]
  Eigen::VectorXd sigmas;               // per-sample noise std [m]
  std::vector<std::int64_t> pixel_ids;  // row-major grid index, may be empty

  static SparseDepthSet uniform(Eigen::VectorXd depths, double sigma = 1.0,
                                std::vector<std::int64_t> pixel_ids = {});

  Eigen::Index count() const { return depths.size(); }

  /// Throws on non-finite / non-positive depths or sigmas and length mismatches.
  void validate() const;
};

struct FitConfig {
  double lambda = 1e-4;
  int iterations = 2;  // Gauss-Newton steps after the linear init
  bool robust = true;
  double huber_delta = 1.0;
};

struct FitResult {
  Eigen::VectorXd weights;          // bias first
  Eigen::VectorXd targets;          // t_i = g^{-1}(s_i)
  BoolArray clamped;                // inverse clamp was active for sample i
  Eigen::VectorXd residuals_depth;  // g(w^T b_i) - s_i
  Eigen::VectorXd robust_weights;   // min(1, delta / |u_i|)
  BoolArray outlier_mask;           // |u_i| > delta
  int iterations_run = 0;
  std::vector<double> weight_deltas;  // ||dw||_2 per Gauss-Newton step

  Eigen::Index outlier_count() const { return outlier_mask.count(); }
};

/// Huber IRLS scale rho'(u)/2 normalized so inliers get exactly 1.
inline double huber_weight(double u, double delta) {
  const double au = std::abs(u);
  return au <= delta ? 1.0 : delta / au;
}

FitResult fit_linear(const BasisStack& basis, const SparseDepthSet& samples,
                     const DepthActivation& act, double lambda, double huber_delta = 1.0);

FitResult fit_gauss_newton(const BasisStack& basis, const SparseDepthSet& samples,
                           const DepthActivation& act, const FitConfig& cfg);

/// fit_linear when cfg.iterations == 0, fit_gauss_newton otherwise.
FitResult fit(const BasisStack& basis, const SparseDepthSet& samples, const DepthActivation& act,
              const FitConfig& cfg);

/// Everything backward_gn needs to replay the forward fit.
struct GaussNewtonTape {
  Eigen::MatrixXd basis;
  Eigen::VectorXd depths;
  Eigen::VectorXd sigmas;
  Eigen::VectorXd targets;
  BoolArray clamped;
  DepthActivation act;
  FitConfig cfg;
  Eigen::VectorXd linear_weights;
  std::vector<Eigen::VectorXd> iterates;  // weights entering each step; iterates[0] is the linear fit
};

struct TapedFit {
  FitResult result;
  GaussNewtonTape tape;
};

TapedFit fit_gauss_newton_taped(const BasisStack& basis, const SparseDepthSet& samples,
                                const DepthActivation& act, const FitConfig& cfg);

/// Per-pixel depth g(w^T b) over a dense H x W x (M+1) basis field.
DepthGrid predict_dense(const Fieldd& bases, const Eigen::VectorXd& weights, const DepthActivation& act);

/// residuals_depth[i] / sigmas[i]
Eigen::VectorXd standardized_residuals(const FitResult& result, const SparseDepthSet& samples);

namespace core {

/// rows * w with a fixed left-to-right accumulation order per row, so that any two
/// callers summing the same columns in the same order agree bit-for-bit.
Eigen::VectorXd affine_logits(const Eigen::MatrixXd& rows, const Eigen::VectorXd& weights);

/// Adds column `col` of `rows` scaled by `weight` into `acc` (same order contract).
void accumulate_column(Eigen::VectorXd& acc, const Eigen::Ref<const Eigen::VectorXd>& column, double weight);

/// (lambda I + B^T B)^{-1} B^T t on an unvalidated matrix.
Eigen::VectorXd solve_ridge(const Eigen::MatrixXd& basis, const Eigen::VectorXd& targets, double lambda);

/// One damped, weighted, optionally robust Gauss-Newton increment dw.
Eigen::VectorXd gauss_newton_increment(const Eigen::MatrixXd& basis, const Eigen::VectorXd& depths,
                                       const Eigen::VectorXd& sigmas, const DepthActivation& act,
                                       const FitConfig& cfg, const Eigen::VectorXd& weights);

/// Forward pass from raw inputs: linear fit on `targets`, then cfg.iterations steps
/// against `depths`. Used by the finite-difference oracle, which perturbs targets
/// and depths independently.
Eigen::VectorXd fit_weights(const Eigen::MatrixXd& basis, const Eigen::VectorXd& targets,
                            const Eigen::VectorXd& depths, const Eigen::VectorXd& sigmas,
                            const DepthActivation& act, const FitConfig& cfg);

}  // namespace core

}  // namespace basisfit
