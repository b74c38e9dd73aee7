#pragma once

// Multi-scale basis pyramid. Level 0 is the coarsest (H / 2^K), level K is full
// resolution. Every level is bilinearly upsampled (half-pixel centers) to H x W and
// concatenated coarsest-first behind a single bias channel, so the flat weight
// vector is (w0, w_level0..., w_level1..., ..., w_levelK...).

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <vector>

#include "basisfit/activation.hpp"
#include "basisfit/fitter.hpp"
#include "basisfit/grid.hpp"

namespace basisfit {

/// Interpolation taps for one axis: out[i] = (1 - frac[i]) * in[lo[i]] + frac[i] * in[hi[i]].
struct AxisTaps {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

/// Half-pixel-center (align_corners = false) taps from `src` samples to `dst` samples.
AxisTaps bilinear_taps(int src, int dst);

template <typename Scalar>
Field<Scalar> upsample_bilinear(const Field<Scalar>& grid, int height, int width) {
  if (grid.height < 1 || grid.width < 1 || height % grid.height != 0 || width % grid.width != 0)
    throw Error(ErrorCode::DimensionMismatch,
                "upsample target " + std::to_string(height) + "x" + std::to_string(width) +
                    " is not an integer multiple of " + std::to_string(grid.height) + "x" +
                    std::to_string(grid.width));
  const AxisTaps ty = bilinear_taps(grid.height, height);
  const AxisTaps tx = bilinear_taps(grid.width, width);
  Field<Scalar> out(height, width, grid.channels());
  for (int c = 0; c < grid.channels(); ++c) {
    for (int i = 0; i < height; ++i) {
      const Scalar fy = Scalar(ty.frac[i]);
      for (int j = 0; j < width; ++j) {
        const Scalar fx = Scalar(tx.frac[j]);
        const Scalar top = (Scalar(1) - fx) * grid(ty.lo[i], tx.lo[j], c) + fx * grid(ty.lo[i], tx.hi[j], c);
        const Scalar bot = (Scalar(1) - fx) * grid(ty.hi[i], tx.lo[j], c) + fx * grid(ty.hi[i], tx.hi[j], c);
        out(i, j, c) = (Scalar(1) - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

/// Adjoint of upsample_bilinear: maps a gradient on the H x W grid back to the source grid.
template <typename Scalar>
Field<Scalar> upsample_bilinear_adjoint(const Field<Scalar>& grad, int src_height, int src_width) {
  if (src_height < 1 || src_width < 1 || grad.height % src_height != 0 || grad.width % src_width != 0)
    throw Error(ErrorCode::DimensionMismatch, "upsample adjoint: incompatible grid sizes");
  const AxisTaps ty = bilinear_taps(src_height, grad.height);
  const AxisTaps tx = bilinear_taps(src_width, grad.width);
  Field<Scalar> out(src_height, src_width, grad.channels());
  for (int c = 0; c < grad.channels(); ++c) {
    for (int i = 0; i < grad.height; ++i) {
      const Scalar fy = Scalar(ty.frac[i]);
      for (int j = 0; j < grad.width; ++j) {
        const Scalar fx = Scalar(tx.frac[j]);
        const Scalar g = grad(i, j, c);
        out(ty.lo[i], tx.lo[j], c) += (Scalar(1) - fy) * (Scalar(1) - fx) * g;
        out(ty.lo[i], tx.hi[j], c) += (Scalar(1) - fy) * fx * g;
        out(ty.hi[i], tx.lo[j], c) += fy * (Scalar(1) - fx) * g;
        out(ty.hi[i], tx.hi[j], c) += fy * fx * g;
      }
    }
  }
  return out;
}

class MultiScaleBases {
 public:
  /// levels[k] must be (H / 2^(K-k)) x (W / 2^(K-k)) with K = levels.size() - 1.
  MultiScaleBases(int height, int width, std::vector<Fieldd> levels);

  /// Zero-filled pyramid for a channel plan (coarsest first).
  static MultiScaleBases zeros(int height, int width, const std::vector<int>& channel_plan);

  int height() const { return height_; }
  int width() const { return width_; }
  int num_levels() const { return static_cast<int>(levels_.size()); }
  int finest_scale() const { return num_levels() - 1; }
  const Fieldd& level(int k) const { return levels_.at(k); }
  Fieldd& level(int k) { return levels_.at(k); }
  std::vector<int> channel_plan() const;
  /// Sum of level channels plus the bias.
  int total_dim() const;
  /// Offset of level k's first weight in the flat vector.
  int weight_offset(int k) const;

  /// Level k bilinearly upsampled to H x W.
  Fieldd upsampled(int k) const;

 private:
  int height_;
  int width_;
  std::vector<Fieldd> levels_;
};

/// Flat weights split per level; the bias belongs to level 0.
struct ScaleWeights {
  double bias = 0.0;
  std::vector<Eigen::VectorXd> levels;

  static ScaleWeights split(const MultiScaleBases& ms, const Eigen::VectorXd& flat);
  Eigen::VectorXd flatten() const;
};

/// Full-resolution H x W x (M+1) field: bias channel then levels coarsest-first.
Fieldd flatten_dense(const MultiScaleBases& ms);

/// Gathers rows of flatten_dense at the given pixels.
BasisStack flatten_to_stack(const MultiScaleBases& ms, const std::vector<std::int64_t>& pixel_ids);

/// Same gather from an already flattened field.
BasisStack gather_rows(const Fieldd& dense, const std::vector<std::int64_t>& pixel_ids);

/// Logits bias + sum_{k <= scale} w_k^T up(b_k) at every full-resolution pixel.
Eigen::VectorXd logits_at_scale(const MultiScaleBases& ms, const ScaleWeights& w, int scale);

/// Depth reconstructed from levels 0..scale. At scale K it equals predict_dense on flatten_dense.
DepthGrid reconstruct_at_scale(const MultiScaleBases& ms, const ScaleWeights& w, const DepthActivation& act,
                               int scale);

/// Chains a gradient on flatten_to_stack's rows back onto each level's native grid.
/// The bias column has no upstream and is ignored.
std::vector<Fieldd> flatten_to_stack_backward(const MultiScaleBases& ms, const std::vector<std::int64_t>& pixel_ids,
                                              const Eigen::MatrixXd& grad_rows);

}  // namespace basisfit
