#include "basisfit/fitter.hpp"

#include <cmath>
#include <string>

#include "basisfit/linalg.hpp"

namespace basisfit {

namespace {

void check_pairing(const Eigen::MatrixXd& basis, const SparseDepthSet& samples) {
  if (samples.count() == 0 || basis.rows() == 0)
    throw Error(ErrorCode::EmptySparseSet, "no sparse depth samples to fit");
  if (basis.rows() != samples.count())
    throw Error(ErrorCode::DimensionMismatch,
                "basis has " + std::to_string(basis.rows()) + " rows but there are " +
                    std::to_string(samples.count()) + " samples");
  samples.validate();
}

void check_config(const FitConfig& cfg) {
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda))
    throw Error(ErrorCode::Config, "lambda must be a finite value >= 0");
  if (cfg.iterations < 0) throw Error(ErrorCode::Config, "iterations must be >= 0");
  if (!(cfg.huber_delta > 0.0)) throw Error(ErrorCode::Config, "huber_delta must be > 0");
}

struct Targets {
  Eigen::VectorXd logits;
  BoolArray clamped;
};

Targets transform_targets(const DepthActivation& act, const Eigen::VectorXd& depths) {
  Targets out{Eigen::VectorXd(depths.size()), BoolArray(depths.size())};
  for (Eigen::Index i = 0; i < depths.size(); ++i) {
    const auto inv = inverse_checked(act, depths(i));
    out.logits(i) = inv.logit;
    out.clamped(i) = inv.clamped;
  }
  return out;
}

// Residuals, Huber weights and the outlier mask at the final weights.
void finalize(FitResult& result, const Eigen::MatrixXd& basis, const SparseDepthSet& samples,
              const DepthActivation& act, double huber_delta) {
  const Eigen::VectorXd depth = forward(act, core::affine_logits(basis, result.weights));
  result.residuals_depth = depth - samples.depths;
  const Eigen::Index n = samples.count();
  result.robust_weights.resize(n);
  result.outlier_mask.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = result.residuals_depth(i) / samples.sigmas(i);
    result.robust_weights(i) = huber_weight(u, huber_delta);
    result.outlier_mask(i) = std::abs(u) > huber_delta;
  }
}

}  // namespace

BasisStack::BasisStack(Eigen::MatrixXd rows) : rows_(std::move(rows)) {
  if (rows_.cols() < 1) throw Error(ErrorCode::InvalidBasis, "basis stack needs at least the bias column");
  if (!rows_.allFinite()) throw Error(ErrorCode::InvalidBasis, "basis stack contains non-finite entries");
  for (Eigen::Index i = 0; i < rows_.rows(); ++i)
    if (rows_(i, 0) != 1.0)
      throw Error(ErrorCode::InvalidBasis,
                  "bias column must be exactly 1 (row " + std::to_string(i) + ")");
}

BasisStack BasisStack::with_bias(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd rows(features.rows(), features.cols() + 1);
  rows.col(0).setOnes();
  rows.rightCols(features.cols()) = features;
  return BasisStack(std::move(rows));
}

SparseDepthSet SparseDepthSet::uniform(Eigen::VectorXd depths, double sigma,
                                       std::vector<std::int64_t> pixel_ids) {
  SparseDepthSet s;
  s.sigmas = Eigen::VectorXd::Constant(depths.size(), sigma);
  s.depths = std::move(depths);
  s.pixel_ids = std::move(pixel_ids);
  return s;
}

void SparseDepthSet::validate() const {
  if (sigmas.size() != depths.size())
    throw Error(ErrorCode::DimensionMismatch, "sigmas and depths differ in length");
  if (!pixel_ids.empty() && static_cast<Eigen::Index>(pixel_ids.size()) != depths.size())
    throw Error(ErrorCode::DimensionMismatch, "pixel_ids and depths differ in length");
  for (Eigen::Index i = 0; i < depths.size(); ++i) {
    if (!(depths(i) > 0.0) || !std::isfinite(depths(i)))
      throw Error(ErrorCode::NonPositiveDepth, "sample " + std::to_string(i) + " has non-positive depth");
    if (!(sigmas(i) > 0.0) || !std::isfinite(sigmas(i)))
      throw Error(ErrorCode::DimensionMismatch, "sample " + std::to_string(i) + " has non-positive sigma");
  }
}

namespace core {

void accumulate_column(Eigen::VectorXd& acc, const Eigen::Ref<const Eigen::VectorXd>& column, double weight) {
  for (Eigen::Index i = 0; i < acc.size(); ++i) acc(i) += column(i) * weight;
}

Eigen::VectorXd affine_logits(const Eigen::MatrixXd& rows, const Eigen::VectorXd& weights) {
  if (rows.cols() != weights.size())
    throw Error(ErrorCode::DimensionMismatch, "weights length " + std::to_string(weights.size()) +
                                                  " does not match " + std::to_string(rows.cols()) +
                                                  " basis channels");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(rows.rows());
  for (Eigen::Index j = 0; j < rows.cols(); ++j) accumulate_column(acc, rows.col(j), weights(j));
  return acc;
}

Eigen::VectorXd solve_ridge(const Eigen::MatrixXd& basis, const Eigen::VectorXd& targets, double lambda) {
  Eigen::MatrixXd normal = basis.transpose() * basis;
  normal.diagonal().array() += lambda;
  const Eigen::VectorXd rhs = basis.transpose() * targets;
  return linalg::solve_spd(linalg::cholesky(normal), rhs);
}

Eigen::VectorXd gauss_newton_increment(const Eigen::MatrixXd& basis, const Eigen::VectorXd& depths,
                                       const Eigen::VectorXd& sigmas, const DepthActivation& act,
                                       const FitConfig& cfg, const Eigen::VectorXd& weights) {
  const Eigen::VectorXd logits = affine_logits(basis, weights);
  const Eigen::Index n = basis.rows();
  // J_i = g'(x_i) b_i; per-row scale q_i = c_i / sigma_i^2 folds W and the IRLS weight.
  Eigen::VectorXd h(n), e(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = forward(act, logits(i)) - depths(i);
    const double d = derivative(act, logits(i));
    const double c = cfg.robust ? huber_weight(r / sigmas(i), cfg.huber_delta) : 1.0;
    const double q = c / (sigmas(i) * sigmas(i));
    h(i) = q * d * d;
    e(i) = q * d * r;
  }
  Eigen::MatrixXd normal = basis.transpose() * h.asDiagonal() * basis;
  normal.diagonal().array() += cfg.lambda;
  const Eigen::VectorXd rhs = -(basis.transpose() * e);
  return linalg::solve_spd(linalg::cholesky(normal), rhs);
}

Eigen::VectorXd fit_weights(const Eigen::MatrixXd& basis, const Eigen::VectorXd& targets,
                            const Eigen::VectorXd& depths, const Eigen::VectorXd& sigmas,
                            const DepthActivation& act, const FitConfig& cfg) {
  Eigen::VectorXd w = solve_ridge(basis, targets, cfg.lambda);
  for (int k = 0; k < cfg.iterations; ++k) w += gauss_newton_increment(basis, depths, sigmas, act, cfg, w);
  return w;
}

}  // namespace core

FitResult fit_linear(const BasisStack& basis, const SparseDepthSet& samples,
                     const DepthActivation& act, double lambda, double huber_delta) {
  check_pairing(basis.rows(), samples);
  check_config(FitConfig{lambda, 0, false, huber_delta});
  auto [logits, clamped] = transform_targets(act, samples.depths);

  FitResult result;
  result.weights = core::solve_ridge(basis.rows(), logits, lambda);
  result.targets = std::move(logits);
  result.clamped = std::move(clamped);
  finalize(result, basis.rows(), samples, act, huber_delta);
  return result;
}

TapedFit fit_gauss_newton_taped(const BasisStack& basis, const SparseDepthSet& samples,
                                const DepthActivation& act, const FitConfig& cfg) {
  check_config(cfg);
  TapedFit out;
  FitResult& result = out.result;
  result = fit_linear(basis, samples, act, cfg.lambda, cfg.huber_delta);

  GaussNewtonTape& tape = out.tape;
  tape.basis = basis.rows();
  tape.depths = samples.depths;
  tape.sigmas = samples.sigmas;
  tape.targets = result.targets;
  tape.clamped = result.clamped;
  tape.act = act;
  tape.cfg = cfg;
  tape.linear_weights = result.weights;

  // Exactly cfg.iterations steps; no convergence test.
  for (int k = 0; k < cfg.iterations; ++k) {
    tape.iterates.push_back(result.weights);
    const Eigen::VectorXd delta =
        core::gauss_newton_increment(basis.rows(), samples.depths, samples.sigmas, act, cfg, result.weights);
    result.weights += delta;
    result.weight_deltas.push_back(delta.norm());
    ++result.iterations_run;
  }
  finalize(result, basis.rows(), samples, act, cfg.huber_delta);
  return out;
}

FitResult fit_gauss_newton(const BasisStack& basis, const SparseDepthSet& samples,
                           const DepthActivation& act, const FitConfig& cfg) {
  return fit_gauss_newton_taped(basis, samples, act, cfg).result;
}

FitResult fit(const BasisStack& basis, const SparseDepthSet& samples, const DepthActivation& act,
              const FitConfig& cfg) {
  if (cfg.iterations == 0) return fit_linear(basis, samples, act, cfg.lambda, cfg.huber_delta);
  return fit_gauss_newton(basis, samples, act, cfg);
}

DepthGrid predict_dense(const Fieldd& bases, const Eigen::VectorXd& weights, const DepthActivation& act) {
  if (bases.channels() != weights.size())
    throw Error(ErrorCode::DimensionMismatch, "basis field has " + std::to_string(bases.channels()) +
                                                  " channels but weights have " +
                                                  std::to_string(weights.size()));
  if (bases.channels() < 1 || !(bases.data.col(0).array() == 1.0).all())
    throw Error(ErrorCode::InvalidBasis, "basis field channel 0 must be all ones");
  return DepthGrid(bases.height, bases.width, forward(act, core::affine_logits(bases.data, weights)));
}

Eigen::VectorXd standardized_residuals(const FitResult& result, const SparseDepthSet& samples) {
  if (result.residuals_depth.size() != samples.count())
    throw Error(ErrorCode::DimensionMismatch, "fit result and samples are not paired");
  return result.residuals_depth.cwiseQuotient(samples.sigmas);
}

}  // namespace basisfit
