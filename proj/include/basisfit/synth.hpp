#pragma once

// Seeded synthetic scenes, basis pyramids and sparse samplers. Every generator is a
// pure function of its parameters and seed.

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "basisfit/activation.hpp"
#include "basisfit/fitter.hpp"
#include "basisfit/grid.hpp"
#include "basisfit/multiscale.hpp"

namespace basisfit {

enum class SceneKind { PlanesAndBumps, RandomSmooth };
enum class BasisMode { Realizable, Generic };

struct SceneParams {
  int height = 128;
  int width = 128;
  SceneKind kind = SceneKind::PlanesAndBumps;
  double min_depth = 3.0;    // [m], must exceed the activation's clamp floor
  double depth_cap = 80.0;   // [m]
  double bump_amplitude = 1.0;  // scale on the Gaussian bumps; 0 gives piecewise-planar logits
};

struct Scene {
  DepthGrid depth;
  Eigen::VectorXd logit;      // g^{-1}(depth), row-major
  std::vector<int> region;    // PlanesAndBumps region label per pixel
  std::uint64_t seed = 0;
  SceneKind kind = SceneKind::PlanesAndBumps;

  int height() const { return depth.height; }
  int width() const { return depth.width; }
};

/// SplitMix64 mix of (seed, stream); used to give every generator its own stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Throws CapViolation if 16 parameter draws fail to land inside (a, depth_cap].
Scene generate_scene(const SceneParams& params, const DepthActivation& act, std::uint64_t seed);

struct GeneratedBases {
  MultiScaleBases bases;
  std::optional<Eigen::VectorXd> w_true;  // Realizable mode only
};

/// Smooth random fields per level. Realizable mode overwrites channel 0 of the finest
/// level with (scene.logit - mean logit) and records w_true = (mean, 0, ..., 1, ..., 0).
GeneratedBases generate_bases(const Scene& scene, const std::vector<int>& channel_plan, BasisMode mode,
                              std::uint64_t seed);

struct SamplerConfig {
  double density = 0.04;
  int count = 0;  // overrides density when > 0
  double depth_cap = 80.0;
  double noise_sigma = 0.0;
  double outlier_fraction = 0.0;
  double outlier_low = 0.5;
  double outlier_high = 1.5;
  std::uint64_t seed = 0;
};

inline constexpr double kSigmaFloor = 1e-3;  // [m]
inline constexpr double kDepthFloor = 1e-3;  // [m]

struct SampledDepths {
  SparseDepthSet samples;
  BoolArray is_outlier;
  Eigen::VectorXd clean_depth;
};

/// Uniform sampling without replacement among pixels with depth <= depth_cap, then
/// additive Gaussian noise; floor(outlier_fraction * N) samples are instead replaced by
/// clean_depth * U[outlier_low, outlier_high]. pixel_ids come out sorted.
SampledDepths sample_sparse(const Scene& scene, const SamplerConfig& cfg);

}  // namespace basisfit
