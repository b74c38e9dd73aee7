#pragma once

// Sensitivities of the fitted weights with respect to the basis rows and the sparse
// targets. The linear fit is differentiated implicitly through A w = B^T t; the
// Gauss-Newton refinement is differentiated by replaying the recorded iterates in
// reverse.

#include <Eigen/Core>
#include <functional>

#include "basisfit/activation.hpp"
#include "basisfit/fitter.hpp"

namespace basisfit {

struct FitGradients {
  Eigen::MatrixXd grad_basis;    // d loss / d B, N x (M+1)
  Eigen::VectorXd grad_targets;  // d loss / d t with the depths held fixed
  Eigen::VectorXd grad_depths;   // total d loss / d s

  /// Column 0 of the basis is structurally constant; its gradient is reported but
  /// should not be applied.
  static constexpr bool bias_column_trainable = false;

  /// grad_basis without the bias column.
  Eigen::MatrixXd trainable_grad_basis() const { return grad_basis.rightCols(grad_basis.cols() - 1); }
};

/// Closed form from A w = B^T t, A = lambda I + B^T B: with u = A^{-1} grad_w and
/// r = t - B w, grad_targets = B u and grad_basis = r u^T - (B u) w^T.
/// grad_depths is left empty; see chain_to_depths.
FitGradients backward_linear(const Eigen::MatrixXd& basis, const Eigen::VectorXd& targets, double lambda,
                             const Eigen::VectorXd& weights, const Eigen::VectorXd& grad_w);

/// backward_linear plus grad_depths through the activation inverse.
FitGradients backward_linear(const BasisStack& basis, const SparseDepthSet& samples, const DepthActivation& act,
                             const FitResult& result, double lambda, const Eigen::VectorXd& grad_w);

/// grad_depths = grad_targets * dg^{-1}/ds, zero for clamped samples.
void chain_to_depths(FitGradients& grads, const DepthActivation& act, const Eigen::VectorXd& depths);

/// Default distance from the Huber kink below which backward_gn refuses to differentiate.
inline constexpr double kDefaultKinkMargin = 1e-6;

/// Reverse pass through a recorded Gauss-Newton fit. With an empty tape this is
/// backward_linear. Throws KinkProximity when a robust step had a standardized
/// residual within `kink_margin` of huber_delta.
FitGradients backward_gn(const GaussNewtonTape& tape, const Eigen::VectorXd& grad_w_final,
                         double kink_margin = kDefaultKinkMargin);

/// Raw inputs of a forward fit; targets are derived from the depths.
struct FitProblem {
  Eigen::MatrixXd basis;
  Eigen::VectorXd depths;
  Eigen::VectorXd sigmas;
  DepthActivation act;
  FitConfig cfg;
};

using WeightLoss = std::function<double(const Eigen::VectorXd&)>;

/// Central differences of loss(fit(problem)) over every basis entry, every target
/// (depths fixed) and every depth (targets recomputed), re-running the full forward
/// fit for each perturbation.
FitGradients finite_diff_oracle(const FitProblem& problem, const WeightLoss& loss, double step);

/// max |a - b| / max |b|; 0 when both are zero.
double gradient_rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace basisfit
