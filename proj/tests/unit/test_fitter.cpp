#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "basisfit/fitter.hpp"
#include "basisfit/metrics.hpp"
#include "basisfit/multiscale.hpp"
#include "basisfit/synth.hpp"
#include "oracles.hpp"

using namespace basisfit;

namespace {

const DepthActivation kSig = DepthActivation::inverse_sigmoid();

// Depths generated through the activation from a known w_true.
struct Problem {
  BasisStack basis;
  Eigen::VectorXd w_true;
  SparseDepthSet samples;
};

Problem realizable(std::uint64_t seed, int n, int m, double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  BasisStack b = BasisStack::with_bias(oracle::gaussian(rng, n, m, 0.5));
  Eigen::VectorXd w = oracle::gaussian(rng, m + 1, 1, 0.3);
  w(0) = -2.0;
  Eigen::VectorXd s = forward(kSig, core::affine_logits(b.rows(), w));
  return {std::move(b), std::move(w), SparseDepthSet::uniform(std::move(s), sigma)};
}

double rms(const Eigen::VectorXd& v) { return std::sqrt(v.squaredNorm() / static_cast<double>(v.size())); }

}  // namespace

TEST_CASE("bias-only fits") {
  const BasisStack ones(Eigen::MatrixXd::Ones(5, 1));
  const FitResult r = fit_linear(ones, SparseDepthSet::uniform(Eigen::VectorXd::Constant(5, 2.0)), kSig, 0.0);
  CHECK(r.weights.size() == 1);
  CHECK(r.weights(0) == 0.0);
  CHECK(r.residuals_depth.cwiseAbs().maxCoeff() == 0.0);

  const auto relu = DepthActivation::relu_offset();
  const BasisStack ones4(Eigen::MatrixXd::Ones(4, 1));
  const double t0 = 1.75, lambda = 0.5;
  const FitResult r4 =
      fit_linear(ones4, SparseDepthSet::uniform(Eigen::VectorXd::Constant(4, t0 + relu.a)), relu, lambda);
  CHECK(r4.weights(0) == doctest::Approx(4 * t0 / (lambda + 4)).epsilon(1e-15));
}

TEST_CASE("linear fit recovers w_true and matches the Gauss-Jordan oracle") {
  const Problem p = realizable(21, 50, 8);
  const FitResult r = fit_linear(p.basis, p.samples, kSig, 1e-10);
  CHECK((r.weights - p.w_true).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(oracle::rel_err(r.weights, oracle::ridge_weights(p.basis.rows(), r.targets, 1e-10)) <= 1e-8);
}

TEST_CASE("linear fit oracle equivalence over seeded shapes") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> nd(10, 500), md(1, 64);
  for (int k = 0; k < 30; ++k) {
    const int n = nd(rng), m = md(rng);
    const double lambda = std::array{1e-6, 1e-4, 1e-2}[k % 3];
    const BasisStack b = BasisStack::with_bias(oracle::gaussian(rng, n, m));
    const Eigen::VectorXd s = (oracle::gaussian(rng, n, 1).array().abs() * 5.0 + 1.5).matrix();
    const FitResult r = fit_linear(b, SparseDepthSet::uniform(s), kSig, lambda);
    CHECK(oracle::rel_err(r.weights, oracle::ridge_weights(b.rows(), r.targets, lambda)) <= 1e-8);
  }
}

TEST_CASE("interpolation with a square nonsingular basis") {
  const Problem p = realizable(3, 9, 8);
  const FitResult r = fit_linear(p.basis, p.samples, kSig, 0.0);
  CHECK(r.residuals_depth.cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("underdetermined systems stay finite and match the oracle") {
  std::mt19937_64 rng(8);
  const BasisStack b = BasisStack::with_bias(oracle::gaussian(rng, 20, 40));
  const Eigen::VectorXd s = Eigen::VectorXd::LinSpaced(20, 3.0, 9.0);
  const FitResult r = fit_linear(b, SparseDepthSet::uniform(s), kSig, 0.01);
  CHECK(r.weights.allFinite());
  CHECK(oracle::rel_err(r.weights, oracle::ridge_weights(b.rows(), r.targets, 0.01)) <= 1e-8);
  CHECK_THROWS_AS(fit_linear(b, SparseDepthSet::uniform(s), kSig, 0.0), NotPositiveDefinite);
}

TEST_CASE("input validation") {
  Eigen::MatrixXd rows = Eigen::MatrixXd::Ones(3, 2);
  rows(1, 0) = 0.999;
  CHECK_THROWS_AS(BasisStack{rows}, Error);
  rows(1, 0) = 1.0;
  rows(2, 1) = std::nan("");
  CHECK_THROWS_AS(BasisStack{rows}, Error);

  const BasisStack b(Eigen::MatrixXd::Ones(3, 2));
  try {
    fit_linear(BasisStack(Eigen::MatrixXd::Ones(0, 2)), SparseDepthSet::uniform(Eigen::VectorXd(0)), kSig, 1e-4);
    FAIL("expected EmptySparseSet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySparseSet);
    CHECK(e.is_numerical());
  }
  CHECK_THROWS_AS(fit_linear(b, SparseDepthSet::uniform(Eigen::VectorXd::Constant(4, 2.0)), kSig, 1e-4), Error);
  CHECK_THROWS_AS(fit_linear(b, SparseDepthSet::uniform(Eigen::Vector3d(2, -1, 3)), kSig, 1e-4), Error);
  CHECK_THROWS_AS(fit_linear(b, SparseDepthSet::uniform(Eigen::Vector3d(2, 2, 3), 0.0), kSig, 1e-4), Error);
  CHECK_THROWS_AS(fit_gauss_newton(b, SparseDepthSet::uniform(Eigen::Vector3d(2, 2, 3)), kSig, FitConfig{-1.0, 2, true, 1.0}), Error);
  CHECK_THROWS_AS(fit_gauss_newton(b, SparseDepthSet::uniform(Eigen::Vector3d(2, 2, 3)), kSig, FitConfig{1e-4, -1, true, 1.0}), Error);
}

TEST_CASE("clamped targets are surfaced") {
  const BasisStack b(Eigen::MatrixXd::Ones(3, 1));
  const FitResult r = fit_linear(b, SparseDepthSet::uniform(Eigen::Vector3d(0.5, 3.0, 4.0)), kSig, 1e-4);
  CHECK(r.clamped(0));
  CHECK_FALSE(r.clamped(1));
  CHECK_FALSE(r.clamped(2));
  CHECK(r.targets(0) == doctest::Approx(-std::log(1e-6)));
}

TEST_CASE("one Gauss-Newton step on an exactly linear problem is a no-op") {
  const auto relu = DepthActivation::relu_offset();
  std::mt19937_64 rng(9);
  const BasisStack b = BasisStack::with_bias(oracle::gaussian(rng, 40, 5, 0.2));
  Eigen::VectorXd w = oracle::gaussian(rng, 6, 1, 0.2);
  w(0) = 5.0;  // every logit stays positive
  const Eigen::VectorXd s = forward(relu, core::affine_logits(b.rows(), w));
  const auto samples = SparseDepthSet::uniform(s);
  const FitResult lin = fit_linear(b, samples, relu, 0.0);
  const FitResult gn = fit_gauss_newton(b, samples, relu, FitConfig{0.0, 1, false, 1.0});
  CHECK((gn.weights - lin.weights).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(gn.weight_deltas.at(0) <= 1e-12);
}

TEST_CASE("two Gauss-Newton steps on a realizable instance") {
  const Problem p = realizable(12, 200, 10);
  std::mt19937_64 rng(12);
  SparseDepthSet noisy = p.samples;
  for (Eigen::Index i = 0; i < noisy.count(); ++i) noisy.depths(i) += 0.05 * oracle::gaussian(rng, 1, 1)(0);
  noisy.sigmas.setConstant(0.05);
  for (const SparseDepthSet* s : {&p.samples, static_cast<const SparseDepthSet*>(&noisy)}) {
    const FitResult lin = fit_linear(p.basis, *s, kSig, 1e-10);
    const FitResult gn = fit_gauss_newton(p.basis, *s, kSig, FitConfig{1e-10, 2, false, 1.0});
    CHECK(rms(gn.residuals_depth) <= rms(lin.residuals_depth));
    CHECK(gn.weight_deltas.size() == 2);
    CHECK(gn.weight_deltas[1] <= 1e-3 * gn.weights.norm());
  }
}

TEST_CASE("iteration count is exact") {
  const Problem p = realizable(4, 60, 6);
  for (int it : {0, 1, 2, 5, 9}) {
    const FitResult r = fit(p.basis, p.samples, kSig, FitConfig{1e-4, it, true, 1.0});
    CHECK(r.iterations_run == it);
    CHECK(r.weight_deltas.size() == static_cast<std::size_t>(it));
  }
}

TEST_CASE("mask and Huber weights at the threshold") {
  const auto relu = DepthActivation::relu_offset();
  const BasisStack b(Eigen::MatrixXd::Ones(4, 1));
  const Eigen::Vector4d s(3.0, 3.0, 3.5, 3.5);  // fitted depth 3.25, residuals +-0.25 exactly
  const FitResult at = fit_linear(b, SparseDepthSet::uniform(s, 0.25), relu, 0.0);
  CHECK(at.residuals_depth.cwiseAbs().maxCoeff() == 0.25);
  CHECK(at.outlier_count() == 0);
  CHECK((at.robust_weights.array() == 1.0).all());
  const FitResult out = fit_linear(b, SparseDepthSet::uniform(s, 0.125), relu, 0.0);
  CHECK(out.outlier_count() == 4);
  CHECK((out.robust_weights.array() == 0.5).all());

  CHECK(huber_weight(1.0, 1.0) == 1.0);
  CHECK(huber_weight(-1.0, 1.0) == 1.0);
  CHECK(huber_weight(3.02, 1.0) == doctest::Approx(1.0 / 3.02));
  double prev = 1.0;
  for (double u = 0.0; u < 10.0; u += 0.125) {
    CHECK(huber_weight(u, 1.0) <= prev);
    prev = huber_weight(u, 1.0);
  }
}

TEST_CASE("standardized residuals") {
  FitResult r;
  r.residuals_depth = Eigen::Vector3d(0.05, 0.151, 0.0);
  const auto samples = SparseDepthSet::uniform(Eigen::Vector3d(3, 3, 3), 0.05);
  const Eigen::VectorXd u = standardized_residuals(r, samples);
  CHECK(u(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(u(1) == doctest::Approx(3.02).epsilon(1e-15));
  CHECK(u(2) == 0.0);
  CHECK_FALSE(std::abs(u(0)) > 1.0 + 1e-15);
  CHECK(std::abs(u(1)) > 1.0);
}

TEST_CASE("mask matches the standardized residual rule on noisy fits") {
  const Problem p = realizable(31, 120, 7, 0.05);
  std::mt19937_64 rng(31);
  SparseDepthSet s = p.samples;
  for (Eigen::Index i = 0; i < s.count(); i += 4) s.depths(i) *= 1.3;
  const FitResult r = fit_gauss_newton(p.basis, s, kSig, FitConfig{1e-4, 2, true, 1.0});
  const Eigen::VectorXd u = standardized_residuals(r, s);
  for (Eigen::Index i = 0; i < s.count(); ++i) {
    CHECK(r.outlier_mask(i) == (std::abs(u(i)) > 1.0));
    CHECK(r.robust_weights(i) == huber_weight(u(i), 1.0));
  }
  CHECK(r.outlier_count() > 0);
}

TEST_CASE("robust step with every weight at one equals the plain step bit for bit") {
  const Problem p = realizable(5, 80, 6, 10.0);
  const FitResult plain = fit_gauss_newton(p.basis, p.samples, kSig, FitConfig{1e-4, 3, false, 1.0});
  const FitResult robust = fit_gauss_newton(p.basis, p.samples, kSig, FitConfig{1e-4, 3, true, 1.0});
  CHECK(robust.outlier_count() == 0);
  CHECK(plain.weights == robust.weights);
}

TEST_CASE("row permutation leaves the weights unchanged") {
  const Problem p = realizable(44, 90, 9, 0.05);
  std::mt19937_64 rng(44);
  SparseDepthSet s = p.samples;
  for (Eigen::Index i = 0; i < s.count(); ++i) s.depths(i) += 0.05 * oracle::gaussian(rng, 1, 1)(0);
  std::vector<int> perm(static_cast<std::size_t>(s.count()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixXd rows(p.basis.rows().rows(), p.basis.dim());
  SparseDepthSet sp = s;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = p.basis.rows().row(perm[i]);
    sp.depths(static_cast<Eigen::Index>(i)) = s.depths(perm[i]);
  }
  for (int it : {0, 2}) {
    const FitConfig cfg{1e-4, it, true, 1.0};
    const FitResult a = fit(p.basis, s, kSig, cfg);
    const FitResult b = fit(BasisStack(rows), sp, kSig, cfg);
    CHECK(oracle::rel_err(b.weights, a.weights) <= 1e-12);
  }
}

TEST_CASE("predict_dense") {
  Fieldd f(3, 4, 3);
  f.data.col(0).setOnes();
  const DepthGrid zero = predict_dense(f, Eigen::Vector3d::Zero(), kSig);
  CHECK((zero.depth.array() == 2.0).all());

  Fieldd one(1, 1, 2);
  one.data << 1.0, 3.0;
  const DepthGrid d = predict_dense(one, Eigen::Vector2d(1.0, -1.0), kSig);
  CHECK(d.depth(0) == doctest::Approx(1.0 + std::exp(2.0)).epsilon(1e-15));

  Fieldd bad(1, 1, 2);
  bad.data << 0.5, 3.0;
  CHECK_THROWS_AS(predict_dense(bad, Eigen::Vector2d(1.0, -1.0), kSig), Error);
  CHECK_THROWS_AS(predict_dense(one, Eigen::Vector3d(1.0, -1.0, 0.0), kSig), Error);

  // Training rows laid out as a grid reproduce the fitted depths.
  const Problem p = realizable(2, 12, 3);
  const FitResult r = fit_linear(p.basis, p.samples, kSig, 1e-4);
  const Fieldd grid(3, 4, p.basis.rows());
  const DepthGrid dense = predict_dense(grid, r.weights, kSig);
  CHECK(dense.depth == Eigen::VectorXd(r.residuals_depth + p.samples.depths));
}

TEST_CASE("robust refinement beats the plain one on corrupted samples") {
  SceneParams sp;
  sp.height = sp.width = 64;
  int wins = 0;
  const int seeds = 100;
  for (int seed = 0; seed < seeds; ++seed) {
    const Scene scene = generate_scene(sp, kSig, derive_seed(seed, 1));
    const GeneratedBases gb = generate_bases(scene, {2, 4, 8}, BasisMode::Realizable, derive_seed(seed, 2));
    const Fieldd dense = flatten_dense(gb.bases);
    SamplerConfig sc;
    sc.noise_sigma = 0.05;
    sc.outlier_fraction = 0.3;
    sc.seed = derive_seed(seed, 3);
    const SampledDepths sd = sample_sparse(scene, sc);
    const BasisStack stack = gather_rows(dense, sd.samples.pixel_ids);
    const FitResult plain = fit(stack, sd.samples, kSig, FitConfig{1e-4, 2, false, 1.0});
    const FitResult robust = fit(stack, sd.samples, kSig, FitConfig{1e-4, 2, true, 1.0});
    const double mae_plain = evaluate(predict_dense(dense, plain.weights, kSig), scene.depth, 80.0).mae;
    const double mae_robust = evaluate(predict_dense(dense, robust.weights, kSig), scene.depth, 80.0).mae;
    wins += mae_robust < mae_plain;
  }
  MESSAGE("robust wins ", wins, " of ", seeds);
  CHECK(wins >= 95);
}

TEST_CASE("affine_logits uses a fixed accumulation order") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd rows = oracle::gaussian(rng, 7, 5);
  const Eigen::VectorXd w = oracle::gaussian(rng, 5, 1);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(7);
  for (int j = 0; j < 5; ++j) core::accumulate_column(acc, rows.col(j), w(j));
  CHECK(core::affine_logits(rows, w) == acc);
}
