#include "doctest.h"

#include <random>

#include "basisfit/layer.hpp"
#include "oracles.hpp"

using namespace basisfit;

namespace {

struct Case {
  Eigen::MatrixXd basis;
  Eigen::VectorXd depths, sigmas;
};

Case make_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Case c;
  c.basis = BasisStack::with_bias(oracle::gaussian(rng, 25, 4, 0.5)).rows();
  Eigen::VectorXd w = oracle::gaussian(rng, 5, 1, 0.3);
  w(0) = -1.0;
  c.depths = forward(DepthActivation::inverse_sigmoid(), core::affine_logits(c.basis, w)) + oracle::gaussian(rng, 25, 1, 0.05);
  c.sigmas = Eigen::VectorXd::Constant(25, 0.05);
  return c;
}

}  // namespace

TEST_CASE("session forward equals the library fit") {
  const Case c = make_case(1);
  const auto act = DepthActivation::inverse_sigmoid();
  const FitConfig cfg{1e-4, 2, true, 1.0};
  const FitSession s = FitSession::run(c.basis, c.depths, c.sigmas, act, cfg);
  const FitResult r = fit(BasisStack(c.basis), SparseDepthSet{c.depths, c.sigmas, {}}, act, cfg);
  CHECK(s.weights() == r.weights);
  CHECK((s.outlier_mask() == r.outlier_mask).all());

  const FitConfig lin{1e-4, 0, false, 1.0};
  const FitSession sl = FitSession::run(c.basis, c.depths, c.sigmas, act, lin);
  CHECK(sl.weights() == fit(BasisStack(c.basis), SparseDepthSet{c.depths, c.sigmas, {}}, act, lin).weights);
}

TEST_CASE("backward is one-shot") {
  const Case c = make_case(2);
  FitSession s = FitSession::run(c.basis, c.depths, c.sigmas, DepthActivation::inverse_sigmoid(), FitConfig{});
  const LayerGradients g = s.backward(Eigen::VectorXd::Zero(5));
  CHECK(g.grad_basis.isZero(0.0));
  CHECK(g.grad_depths.isZero(0.0));
  CHECK(s.consumed());
  try {
    s.backward(Eigen::VectorXd::Zero(5));
    FAIL("expected HandleConsumed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::HandleConsumed);
  }
}

TEST_CASE("session gradients match finite differences") {
  const Case c = make_case(3);
  const auto act = DepthActivation::inverse_sigmoid();
  const FitConfig cfg{1e-3, 2, true, 1.0};
  std::mt19937_64 rng(3);
  const Eigen::VectorXd w_ref = oracle::gaussian(rng, 5, 1);
  FitSession s = FitSession::run(c.basis, c.depths, c.sigmas, act, cfg);
  const LayerGradients g = s.backward(s.weights() - w_ref, 1e-3);
  const FitGradients fd = finite_diff_oracle(FitProblem{c.basis, c.depths, c.sigmas, act, cfg},
                                             [&](const Eigen::VectorXd& w) { return 0.5 * (w - w_ref).squaredNorm(); },
                                             1e-6);
  CHECK(gradient_rel_error(g.grad_basis, fd.grad_basis) <= 1e-5);
  CHECK(gradient_rel_error(g.grad_depths, fd.grad_depths) <= 1e-5);
}

TEST_CASE("session input errors keep their names") {
  const Case c = make_case(4);
  Eigen::MatrixXd bad = c.basis;
  bad(0, 0) = 2.0;
  try {
    FitSession::run(bad, c.depths, c.sigmas, DepthActivation::inverse_sigmoid(), FitConfig{});
    FAIL("expected InvalidBasis");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidBasis);
    CHECK(std::string(e.what()).find("InvalidBasis") != std::string::npos);
    CHECK(std::string(e.what()).find("bias") != std::string::npos);
  }
  try {
    FitSession::run(Eigen::MatrixXd(0, 5), Eigen::VectorXd(0), Eigen::VectorXd(0), DepthActivation::inverse_sigmoid(),
                    FitConfig{});
    FAIL("expected EmptySparseSet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySparseSet);
  }
}

TEST_CASE("large arrays pass through without truncation") {
  const Eigen::Index n = 100000;
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd basis = BasisStack::with_bias(oracle::gaussian(rng, n, 2, 0.3)).rows();
  const Eigen::VectorXd depths = Eigen::VectorXd::Constant(n, 4.0) + oracle::gaussian(rng, n, 1, 0.01);
  FitSession s = FitSession::run(basis, depths, Eigen::VectorXd::Constant(n, 0.05), DepthActivation::inverse_sigmoid(),
                                 FitConfig{1e-4, 1, false, 1.0});
  CHECK(s.outlier_mask().size() == n);
  const LayerGradients g = s.backward(Eigen::Vector3d(1.0, 0.0, 0.0));
  CHECK(g.grad_basis.rows() == n);
  CHECK(g.grad_depths.size() == n);
  CHECK(g.grad_depths.allFinite());
}
