#pragma once

// Array-in / array-out entry points for wrapping the fit as a layer in a host
// autodiff framework. A session owns one forward fit and allows one backward call.

#include <Eigen/Core>
#include <optional>

#include "basisfit/backward.hpp"
#include "basisfit/fitter.hpp"

namespace basisfit {

struct LayerGradients {
  Eigen::MatrixXd grad_basis;  // N x (M+1)
  Eigen::VectorXd grad_depths;
};

class FitSession {
 public:
  /// Validates inputs like fit(); iterations == 0 records an empty tape.
  static FitSession run(const Eigen::MatrixXd& basis, const Eigen::VectorXd& depths, const Eigen::VectorXd& sigmas,
                        const DepthActivation& act, const FitConfig& cfg);

  const Eigen::VectorXd& weights() const { return fit_.result.weights; }
  const BoolArray& outlier_mask() const { return fit_.result.outlier_mask; }
  const FitResult& result() const { return fit_.result; }
  bool consumed() const { return consumed_; }

  /// Throws HandleConsumed on the second call.
  LayerGradients backward(const Eigen::VectorXd& grad_w, double kink_margin = kDefaultKinkMargin);

 private:
  explicit FitSession(TapedFit fit) : fit_(std::move(fit)) {}
  TapedFit fit_;
  bool consumed_ = false;
};

}  // namespace basisfit
