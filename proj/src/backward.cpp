#include "basisfit/backward.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "basisfit/linalg.hpp"

namespace basisfit {

FitGradients backward_linear(const Eigen::MatrixXd& basis, const Eigen::VectorXd& targets, double lambda,
                             const Eigen::VectorXd& weights, const Eigen::VectorXd& grad_w) {
  if (targets.size() != basis.rows() || weights.size() != basis.cols() || grad_w.size() != basis.cols())
    throw Error(ErrorCode::DimensionMismatch, "backward_linear: inconsistent shapes");
  Eigen::MatrixXd normal = basis.transpose() * basis;
  normal.diagonal().array() += lambda;
  const Eigen::VectorXd u = linalg::solve_spd(linalg::cholesky(normal), grad_w);
  const Eigen::VectorXd bu = basis * u;
  const Eigen::VectorXd r = targets - basis * weights;

  FitGradients g;
  g.grad_targets = bu;
  g.grad_basis = r * u.transpose() - bu * weights.transpose();
  return g;
}

void chain_to_depths(FitGradients& grads, const DepthActivation& act, const Eigen::VectorXd& depths) {
  if (depths.size() != grads.grad_targets.size())
    throw Error(ErrorCode::DimensionMismatch, "chain_to_depths: length mismatch");
  grads.grad_depths.resize(depths.size());
  for (Eigen::Index i = 0; i < depths.size(); ++i)
    grads.grad_depths(i) = grads.grad_targets(i) * inverse_derivative(act, depths(i));
}

FitGradients backward_linear(const BasisStack& basis, const SparseDepthSet& samples, const DepthActivation& act,
                             const FitResult& result, double lambda, const Eigen::VectorXd& grad_w) {
  FitGradients g = backward_linear(basis.rows(), result.targets, lambda, result.weights, grad_w);
  chain_to_depths(g, act, samples.depths);
  return g;
}

FitGradients backward_gn(const GaussNewtonTape& tape, const Eigen::VectorXd& grad_w_final, double kink_margin) {
  const Eigen::MatrixXd& B = tape.basis;
  const Eigen::Index n = B.rows();
  const Eigen::Index p = B.cols();
  const FitConfig& cfg = tape.cfg;
  const DepthActivation& act = tape.act;
  if (grad_w_final.size() != p) throw Error(ErrorCode::DimensionMismatch, "grad_w length does not match weights");

  Eigen::MatrixXd grad_basis = Eigen::MatrixXd::Zero(n, p);
  Eigen::VectorXd grad_depths_direct = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd gw = grad_w_final;

  for (auto k = static_cast<std::ptrdiff_t>(tape.iterates.size()) - 1; k >= 0; --k) {
    const Eigen::VectorXd& w = tape.iterates[static_cast<std::size_t>(k)];
    const Eigen::VectorXd x = core::affine_logits(B, w);

    // Forward quantities of this step.
    Eigen::VectorXd d(n), dd(n), r(n), q(n), dc(n), h(n), e(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      d(i) = derivative(act, x(i));
      dd(i) = second_derivative(act, x(i));
      r(i) = forward(act, x(i)) - tape.depths(i);
      const double u = r(i) / tape.sigmas(i);
      double c = 1.0;
      dc(i) = 0.0;
      if (cfg.robust) {
        if (std::abs(std::abs(u) - cfg.huber_delta) < kink_margin)
          throw Error(ErrorCode::KinkProximity, "standardized residual of sample " + std::to_string(i) +
                                                    " is within " + std::to_string(kink_margin) +
                                                    " of the Huber threshold at step " + std::to_string(k));
        c = huber_weight(u, cfg.huber_delta);
        if (std::abs(u) > cfg.huber_delta) dc(i) = -cfg.huber_delta * (u > 0 ? 1.0 : -1.0) / (u * u);
      }
      q(i) = c / (tape.sigmas(i) * tape.sigmas(i));
      h(i) = q(i) * d(i) * d(i);
      e(i) = q(i) * d(i) * r(i);
    }
    Eigen::MatrixXd normal = B.transpose() * h.asDiagonal() * B;
    normal.diagonal().array() += cfg.lambda;
    const auto factor = linalg::cholesky(normal);
    const Eigen::VectorXd delta = linalg::solve_spd(factor, Eigen::VectorXd(-(B.transpose() * e)));

    // w_next = w + delta; delta = H^{-1} rhs, rhs = -B^T e, H = B^T diag(h) B + lambda I.
    const auto solve_grads = linalg::solve_spd_backward(factor, delta, gw);
    const Eigen::VectorXd& v = solve_grads.grad_rhs;
    const Eigen::MatrixXd& grad_h_mat = solve_grads.grad_a;

    const Eigen::VectorXd grad_e = -(B * v);
    grad_basis.noalias() -= e * v.transpose();

    const Eigen::MatrixXd bg = B * grad_h_mat;
    const Eigen::VectorXd grad_h = (bg.array() * B.array()).rowwise().sum();
    grad_basis.noalias() += 2.0 * (h.asDiagonal() * bg);

    Eigen::VectorXd grad_x(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double gq = grad_h(i) * d(i) * d(i) + grad_e(i) * d(i) * r(i);
      const double gd = grad_h(i) * 2.0 * q(i) * d(i) + grad_e(i) * q(i) * r(i);
      double gr = grad_e(i) * q(i) * d(i);
      const double s2 = tape.sigmas(i) * tape.sigmas(i);
      gr += gq / s2 * dc(i) / tape.sigmas(i);
      grad_x(i) = gr * d(i) + gd * dd(i);
      grad_depths_direct(i) -= gr;
    }
    grad_basis.noalias() += grad_x * w.transpose();
    gw += B.transpose() * grad_x;
  }

  FitGradients g = backward_linear(B, tape.targets, cfg.lambda, tape.linear_weights, gw);
  g.grad_basis += grad_basis;
  chain_to_depths(g, act, tape.depths);
  g.grad_depths += grad_depths_direct;
  return g;
}

FitGradients finite_diff_oracle(const FitProblem& problem, const WeightLoss& loss, double step) {
  if (!(step > 0.0)) throw Error(ErrorCode::Config, "finite difference step must be > 0");
  const Eigen::Index n = problem.basis.rows();
  const Eigen::Index p = problem.basis.cols();
  const auto& act = problem.act;
  const auto& cfg = problem.cfg;

  Eigen::VectorXd targets(n);
  for (Eigen::Index i = 0; i < n; ++i) targets(i) = inverse(act, problem.depths(i));

  const auto eval = [&](const Eigen::MatrixXd& b, const Eigen::VectorXd& t, const Eigen::VectorXd& s) {
    return loss(core::fit_weights(b, t, s, problem.sigmas, act, cfg));
  };

  FitGradients g;
  g.grad_basis.resize(n, p);
  Eigen::MatrixXd b = problem.basis;
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double orig = b(i, j);
      b(i, j) = orig + step;
      const double plus = eval(b, targets, problem.depths);
      b(i, j) = orig - step;
      const double minus = eval(b, targets, problem.depths);
      b(i, j) = orig;
      g.grad_basis(i, j) = (plus - minus) / (2.0 * step);
    }
  }

  g.grad_targets.resize(n);
  Eigen::VectorXd t = targets;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double orig = t(i);
    t(i) = orig + step;
    const double plus = eval(problem.basis, t, problem.depths);
    t(i) = orig - step;
    const double minus = eval(problem.basis, t, problem.depths);
    t(i) = orig;
    g.grad_targets(i) = (plus - minus) / (2.0 * step);
  }

  g.grad_depths.resize(n);
  Eigen::VectorXd s = problem.depths;
  Eigen::VectorXd ts = targets;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double orig = s(i);
    s(i) = orig + step;
    ts(i) = inverse(act, s(i));
    const double plus = eval(problem.basis, ts, s);
    s(i) = orig - step;
    ts(i) = inverse(act, s(i));
    const double minus = eval(problem.basis, ts, s);
    s(i) = orig;
    ts(i) = targets(i);
    g.grad_depths(i) = (plus - minus) / (2.0 * step);
  }
  return g;
}

double gradient_rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::DimensionMismatch, "gradient_rel_error: shape mismatch");
  if (a.size() == 0) return 0.0;
  const double diff = (a - b).cwiseAbs().maxCoeff();
  const double scale = b.cwiseAbs().maxCoeff();
  if (scale == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / scale;
}

}  // namespace basisfit
