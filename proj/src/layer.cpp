#include "basisfit/layer.hpp"

namespace basisfit {

FitSession FitSession::run(const Eigen::MatrixXd& basis, const Eigen::VectorXd& depths,
                           const Eigen::VectorXd& sigmas, const DepthActivation& act, const FitConfig& cfg) {
  const BasisStack stack(basis);
  const SparseDepthSet samples{depths, sigmas, {}};
  return FitSession(fit_gauss_newton_taped(stack, samples, act, cfg));
}

LayerGradients FitSession::backward(const Eigen::VectorXd& grad_w, double kink_margin) {
  if (consumed_) throw Error(ErrorCode::HandleConsumed, "backward already called on this fit session");
  consumed_ = true;
  FitGradients g = backward_gn(fit_.tape, grad_w, kink_margin);
  return {std::move(g.grad_basis), std::move(g.grad_depths)};
}

}  // namespace basisfit
