#pragma once

// Logit -> depth activations. InverseSigmoid is g(x) = a / sigmoid(x) = a (1 + e^-x),
// strictly decreasing onto (a, inf). ReluOffset is max(x, 0) + a.

#include <Eigen/Core>
#include <cmath>
#include <concepts>
#include <string>

#include "basisfit/error.hpp"

namespace basisfit {

enum class ActivationKind { InverseSigmoid, ReluOffset };

struct DepthActivation {
  ActivationKind kind = ActivationKind::InverseSigmoid;
  double a = 1.0;         // minimum depth [m]
  double epsilon = 1e-6;  // inverse clamp margin

  static DepthActivation inverse_sigmoid(double a = 1.0, double epsilon = 1e-6) {
    return {ActivationKind::InverseSigmoid, a, epsilon};
  }
  static DepthActivation relu_offset(double a = 1.0) { return {ActivationKind::ReluOffset, a, 1e-6}; }

  /// Smallest depth that inverts without clamping.
  double clamp_floor() const { return a * (1.0 + epsilon); }
};

template <std::floating_point Scalar>
Scalar forward(const DepthActivation& act, Scalar x) {
  const Scalar a(act.a);
  if (act.kind == ActivationKind::InverseSigmoid) return a * (Scalar(1) + std::exp(-x));
  return (x > Scalar(0) ? x : Scalar(0)) + a;
}

/// g'(x). For InverseSigmoid this is a - g(x); the ReLU kink takes subgradient 0.
template <std::floating_point Scalar>
Scalar derivative(const DepthActivation& act, Scalar x) {
  if (act.kind == ActivationKind::InverseSigmoid) return Scalar(act.a) - forward(act, x);
  return x > Scalar(0) ? Scalar(1) : Scalar(0);
}

/// g''(x) = g(x) - a for InverseSigmoid, 0 for ReluOffset.
template <std::floating_point Scalar>
Scalar second_derivative(const DepthActivation& act, Scalar x) {
  if (act.kind == ActivationKind::InverseSigmoid) return forward(act, x) - Scalar(act.a);
  return Scalar(0);
}

template <std::floating_point Scalar>
struct InverseResult {
  Scalar logit;
  bool clamped;
};

template <std::floating_point Scalar>
InverseResult<Scalar> inverse_checked(const DepthActivation& act, Scalar s) {
  if (!(s > Scalar(0)) || !std::isfinite(static_cast<double>(s)))
    throw Error(ErrorCode::NonPositiveDepth, "depth " + std::to_string(static_cast<double>(s)) +
                                                 " is not a positive finite value");
  if (act.kind == ActivationKind::ReluOffset) return {s - Scalar(act.a), false};
  const Scalar floor(act.clamp_floor());
  const bool clamped = s < floor;
  const Scalar sc = clamped ? floor : s;
  return {-std::log(sc / Scalar(act.a) - Scalar(1)), clamped};
}

template <std::floating_point Scalar>
Scalar inverse(const DepthActivation& act, Scalar s) {
  return inverse_checked(act, s).logit;
}

/// d g^{-1}(s) / ds; zero where the inverse clamp is active.
template <std::floating_point Scalar>
Scalar inverse_derivative(const DepthActivation& act, Scalar s) {
  if (act.kind == ActivationKind::ReluOffset) return Scalar(1);
  if (s < Scalar(act.clamp_floor())) return Scalar(0);
  return Scalar(-1) / (s - Scalar(act.a));
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> forward(
    const DepthActivation& act, const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  return logits.unaryExpr([&act](Scalar x) { return forward(act, x); });
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> derivative(
    const DepthActivation& act, const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  return logits.unaryExpr([&act](Scalar x) { return derivative(act, x); });
}

}  // namespace basisfit
