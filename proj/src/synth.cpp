#include "basisfit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

namespace basisfit {

namespace {

using Rng = std::mt19937_64;

constexpr int kMaxSceneDraws = 16;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Sum of `terms` random plane waves with frequencies up to `max_freq` cycles per pixel.
// cos(ky*y + kx*x + phi) is expanded separably so each term costs two vectors.
Eigen::VectorXd smooth_field(Rng& rng, int height, int width, int terms, double max_freq, double amplitude) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(height, width);
  std::normal_distribution<double> amp(0.0, amplitude);
  for (int t = 0; t < terms; ++t) {
    const double ky = 2.0 * std::numbers::pi * uniform(rng, -max_freq, max_freq);
    const double kx = 2.0 * std::numbers::pi * uniform(rng, -max_freq, max_freq);
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double a = amp(rng);
    Eigen::VectorXd cy(height), sy(height);
    Eigen::RowVectorXd cx(width), sx(width);
    for (int i = 0; i < height; ++i) {
      cy(i) = std::cos(ky * i + phase);
      sy(i) = std::sin(ky * i + phase);
    }
    for (int j = 0; j < width; ++j) {
      cx(j) = std::cos(kx * j);
      sx(j) = std::sin(kx * j);
    }
    acc.noalias() += a * (cy * cx - sy * sx);
  }
  // Row-major pixel order.
  Eigen::VectorXd out(Eigen::Index(height) * width);
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j) out(Eigen::Index(i) * width + j) = acc(i, j);
  return out;
}

struct LogitRange {
  double lo, hi;
  double span() const { return hi - lo; }
};

LogitRange logit_range(const SceneParams& p, const DepthActivation& act) {
  if (!(p.min_depth > act.clamp_floor()) || !(p.depth_cap > p.min_depth))
    throw Error(ErrorCode::CapViolation, "scene depth range (" + std::to_string(p.min_depth) + ", " +
                                             std::to_string(p.depth_cap) + "] is not inside (a, cap]");
  const double x0 = inverse(act, p.min_depth);
  const double x1 = inverse(act, p.depth_cap);
  return {std::min(x0, x1), std::max(x0, x1)};
}

Eigen::VectorXd planes_and_bumps(Rng& rng, const SceneParams& p, LogitRange range, std::vector<int>& region) {
  const int h = p.height, w = p.width;
  const double span = range.span();
  const double lo = range.lo + 0.15 * span;
  const double hi = range.hi - 0.15 * span;

  const int regions = std::uniform_int_distribution<int>(2, 5)(rng);
  std::vector<double> sy(regions), sx(regions), center(regions), gy(regions), gx(regions);
  for (int r = 0; r < regions; ++r) {
    sy[r] = uniform(rng, 0.0, h);
    sx[r] = uniform(rng, 0.0, w);
    center[r] = uniform(rng, lo, hi);
    // Slopes bounded so the plane stays within [lo, hi] over the whole image.
    const double room = std::min(center[r] - lo, hi - center[r]);
    const double share = uniform(rng, 0.0, 1.0);
    gy[r] = uniform(rng, -1.0, 1.0) * share * room / (0.5 * h);
    gx[r] = uniform(rng, -1.0, 1.0) * (1.0 - share) * room / (0.5 * w);
  }
  const int bumps = std::uniform_int_distribution<int>(1, 3)(rng);
  std::vector<double> by(bumps), bx(bumps), bs(bumps), ba(bumps);
  for (int b = 0; b < bumps; ++b) {
    by[b] = uniform(rng, 0.0, h);
    bx[b] = uniform(rng, 0.0, w);
    bs[b] = uniform(rng, 0.05, 0.2) * std::min(h, w);
    ba[b] = (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0) * uniform(rng, 0.02, 0.1) * span * p.bump_amplitude;
  }

  Eigen::VectorXd logit(Eigen::Index(h) * w);
  region.assign(static_cast<std::size_t>(h) * w, 0);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int r = 0; r < regions; ++r) {
        const double d = (i - sy[r]) * (i - sy[r]) + (j - sx[r]) * (j - sx[r]);
        if (d < best_d) {
          best_d = d;
          best = r;
        }
      }
      double v = center[best] + gy[best] * (i - 0.5 * h) + gx[best] * (j - 0.5 * w);
      if (p.bump_amplitude != 0.0) {
        for (int b = 0; b < bumps; ++b) {
          const double d2 = (i - by[b]) * (i - by[b]) + (j - bx[b]) * (j - bx[b]);
          v += ba[b] * std::exp(-0.5 * d2 / (bs[b] * bs[b]));
        }
      }
      const auto idx = static_cast<std::size_t>(i) * w + j;
      logit(static_cast<Eigen::Index>(idx)) = v;
      region[idx] = best;
    }
  }
  return logit;
}

Eigen::VectorXd random_smooth(Rng& rng, const SceneParams& p, LogitRange range) {
  Eigen::VectorXd f = smooth_field(rng, p.height, p.width, 6, 3.0 / std::max(p.height, p.width), 1.0);
  const double fmin = f.minCoeff(), fmax = f.maxCoeff();
  const double lo = range.lo + 0.05 * range.span();
  const double hi = range.hi - 0.05 * range.span();
  if (fmax - fmin <= 0.0) return Eigen::VectorXd::Constant(f.size(), 0.5 * (lo + hi));
  return ((f.array() - fmin) / (fmax - fmin) * (hi - lo) + lo).matrix();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Scene generate_scene(const SceneParams& params, const DepthActivation& act, std::uint64_t seed) {
  if (params.height < 1 || params.width < 1)
    throw Error(ErrorCode::DimensionMismatch, "scene dimensions must be positive");
  const LogitRange range = logit_range(params, act);
  Rng rng(seed);
  for (int attempt = 0; attempt < kMaxSceneDraws; ++attempt) {
    Scene scene;
    scene.seed = seed;
    scene.kind = params.kind;
    scene.logit = params.kind == SceneKind::PlanesAndBumps ? planes_and_bumps(rng, params, range, scene.region)
                                                           : random_smooth(rng, params, range);
    Eigen::VectorXd depth = forward(act, scene.logit);
    const bool ok = (depth.array() > act.clamp_floor()).all() && (depth.array() <= params.depth_cap).all();
    if (!ok) continue;
    scene.depth = DepthGrid(params.height, params.width, std::move(depth));
    return scene;
  }
  throw Error(ErrorCode::CapViolation, "could not draw a scene inside (a, depth_cap] in " +
                                           std::to_string(kMaxSceneDraws) + " attempts");
}

GeneratedBases generate_bases(const Scene& scene, const std::vector<int>& channel_plan, BasisMode mode,
                              std::uint64_t seed) {
  for (const int c : channel_plan)
    if (c < 1) throw Error(ErrorCode::DimensionMismatch, "channel plan entries must be positive");
  MultiScaleBases ms = MultiScaleBases::zeros(scene.height(), scene.width(), channel_plan);
  Rng rng(seed);
  for (int k = 0; k < ms.num_levels(); ++k) {
    Fieldd& level = ms.level(k);
    for (int c = 0; c < level.channels(); ++c)
      level.data.col(c) = smooth_field(rng, level.height, level.width, 4, 0.25, 0.5);
  }

  GeneratedBases out{std::move(ms), std::nullopt};
  if (mode == BasisMode::Realizable) {
    const int top = out.bases.finest_scale();
    const double mean = scene.logit.mean();
    out.bases.level(top).data.col(0) = scene.logit.array() - mean;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(out.bases.total_dim());
    w(0) = mean;
    w(out.bases.weight_offset(top)) = 1.0;
    out.w_true = std::move(w);
  }
  return out;
}

SampledDepths sample_sparse(const Scene& scene, const SamplerConfig& cfg) {
  if (cfg.count <= 0 && !(cfg.density > 0.0 && cfg.density <= 1.0))
    throw Error(ErrorCode::Config, "sampler density must be in (0, 1]");
  if (!(cfg.outlier_fraction >= 0.0 && cfg.outlier_fraction <= 1.0))
    throw Error(ErrorCode::Config, "outlier_fraction must be in [0, 1]");
  if (!(cfg.outlier_low > 0.0 && cfg.outlier_low <= cfg.outlier_high))
    throw Error(ErrorCode::Config, "outlier range must satisfy 0 < low <= high");
  if (!(cfg.noise_sigma >= 0.0)) throw Error(ErrorCode::Config, "noise_sigma must be >= 0");

  std::vector<std::int64_t> eligible;
  for (Eigen::Index p = 0; p < scene.depth.pixels(); ++p) {
    const double d = scene.depth.depth(p);
    if (scene.depth.valid(p) && d > 0.0 && d <= cfg.depth_cap) eligible.push_back(p);
  }
  if (eligible.empty()) throw Error(ErrorCode::NoEligiblePixels, "no pixel has depth <= depth_cap");

  const auto requested = cfg.count > 0
                             ? static_cast<std::size_t>(cfg.count)
                             : static_cast<std::size_t>(std::floor(cfg.density * static_cast<double>(scene.depth.pixels())));
  if (requested == 0) throw Error(ErrorCode::Config, "sampler density yields zero samples");
  const std::size_t n = std::min(requested, eligible.size());

  Rng rng(cfg.seed);
  // Partial Fisher-Yates over the eligible pixels.
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = std::uniform_int_distribution<std::size_t>(i, eligible.size() - 1)(rng);
    std::swap(eligible[i], eligible[j]);
  }
  std::vector<std::int64_t> ids(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(ids.begin(), ids.end());

  SampledDepths out;
  const auto nn = static_cast<Eigen::Index>(n);
  out.clean_depth.resize(nn);
  Eigen::VectorXd depths(nn);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Eigen::Index i = 0; i < nn; ++i) {
    out.clean_depth(i) = scene.depth.depth(ids[static_cast<std::size_t>(i)]);
    depths(i) = out.clean_depth(i) + (cfg.noise_sigma > 0.0 ? cfg.noise_sigma * noise(rng) : 0.0);
  }

  out.is_outlier = BoolArray::Constant(nn, false);
  const auto n_out = static_cast<std::size_t>(std::floor(cfg.outlier_fraction * static_cast<double>(n)));
  std::vector<Eigen::Index> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<Eigen::Index>(i);
  for (std::size_t i = 0; i < n_out; ++i) {
    const auto j = std::uniform_int_distribution<std::size_t>(i, n - 1)(rng);
    std::swap(order[i], order[j]);
    const Eigen::Index k = order[i];
    out.is_outlier(k) = true;
    depths(k) = out.clean_depth(k) * uniform(rng, cfg.outlier_low, cfg.outlier_high);
  }
  depths = depths.cwiseMax(kDepthFloor);

  out.samples.depths = std::move(depths);
  out.samples.sigmas = Eigen::VectorXd::Constant(nn, std::max(cfg.noise_sigma, kSigmaFloor));
  out.samples.pixel_ids = std::move(ids);
  return out;
}

}  // namespace basisfit
