#include "basisfit/multiscale.hpp"

#include <string>

namespace basisfit {

AxisTaps bilinear_taps(int src, int dst) {
  if (src < 1 || dst < 1) throw Error(ErrorCode::DimensionMismatch, "bilinear_taps: sizes must be positive");
  AxisTaps taps;
  taps.lo.resize(dst);
  taps.hi.resize(dst);
  taps.frac.resize(dst);
  // Source coordinate of output sample i is (i + 1/2) * src / dst - 1/2, kept as the
  // exact rational num / den so source centers land on integers.
  const std::int64_t den = 2 * std::int64_t(dst);
  for (int i = 0; i < dst; ++i) {
    const std::int64_t num = (2 * std::int64_t(i) + 1) * src - dst;
    int lo = 0;
    double frac = 0.0;
    if (num > 0) {
      lo = static_cast<int>(num / den);
      frac = static_cast<double>(num % den) / static_cast<double>(den);
    }
    if (lo >= src - 1) {
      lo = src - 1;
      frac = 0.0;
    }
    taps.lo[i] = lo;
    taps.hi[i] = std::min(lo + 1, src - 1);
    taps.frac[i] = frac;
  }
  return taps;
}

MultiScaleBases::MultiScaleBases(int height, int width, std::vector<Fieldd> levels)
    : height_(height), width_(width), levels_(std::move(levels)) {
  if (levels_.empty()) throw Error(ErrorCode::DimensionMismatch, "pyramid needs at least one level");
  const int top = finest_scale();
  if (height % (1 << top) != 0 || width % (1 << top) != 0)
    throw Error(ErrorCode::DimensionMismatch, "image size must be divisible by 2^K");
  for (int k = 0; k <= top; ++k) {
    const int f = 1 << (top - k);
    if (levels_[k].height != height / f || levels_[k].width != width / f)
      throw Error(ErrorCode::DimensionMismatch,
                  "level " + std::to_string(k) + " is " + std::to_string(levels_[k].height) + "x" +
                      std::to_string(levels_[k].width) + ", expected " + std::to_string(height / f) +
                      "x" + std::to_string(width / f));
  }
}

MultiScaleBases MultiScaleBases::zeros(int height, int width, const std::vector<int>& channel_plan) {
  if (channel_plan.empty()) throw Error(ErrorCode::DimensionMismatch, "empty channel plan");
  const int top = static_cast<int>(channel_plan.size()) - 1;
  if (height % (1 << top) != 0 || width % (1 << top) != 0)
    throw Error(ErrorCode::DimensionMismatch, "image size must be divisible by 2^K");
  std::vector<Fieldd> levels;
  for (int k = 0; k <= top; ++k) {
    const int f = 1 << (top - k);
    levels.emplace_back(height / f, width / f, channel_plan[k]);
  }
  return MultiScaleBases(height, width, std::move(levels));
}

std::vector<int> MultiScaleBases::channel_plan() const {
  std::vector<int> plan;
  for (const auto& l : levels_) plan.push_back(l.channels());
  return plan;
}

int MultiScaleBases::total_dim() const { return weight_offset(num_levels()); }

int MultiScaleBases::weight_offset(int k) const {
  int off = 1;
  for (int j = 0; j < k; ++j) off += levels_[j].channels();
  return off;
}

Fieldd MultiScaleBases::upsampled(int k) const { return upsample_bilinear(level(k), height_, width_); }

ScaleWeights ScaleWeights::split(const MultiScaleBases& ms, const Eigen::VectorXd& flat) {
  if (flat.size() != ms.total_dim())
    throw Error(ErrorCode::DimensionMismatch, "flat weights have length " + std::to_string(flat.size()) +
                                                  ", pyramid needs " + std::to_string(ms.total_dim()));
  ScaleWeights w;
  w.bias = flat(0);
  for (int k = 0; k < ms.num_levels(); ++k)
    w.levels.push_back(flat.segment(ms.weight_offset(k), ms.level(k).channels()));
  return w;
}

Eigen::VectorXd ScaleWeights::flatten() const {
  Eigen::Index n = 1;
  for (const auto& l : levels) n += l.size();
  Eigen::VectorXd flat(n);
  flat(0) = bias;
  Eigen::Index off = 1;
  for (const auto& l : levels) {
    flat.segment(off, l.size()) = l;
    off += l.size();
  }
  return flat;
}

Fieldd flatten_dense(const MultiScaleBases& ms) {
  Fieldd out(ms.height(), ms.width(), ms.total_dim());
  out.data.col(0).setOnes();
  for (int k = 0; k < ms.num_levels(); ++k) {
    const Fieldd up = ms.upsampled(k);
    out.data.middleCols(ms.weight_offset(k), up.channels()) = up.data;
  }
  return out;
}

BasisStack gather_rows(const Fieldd& dense, const std::vector<std::int64_t>& pixel_ids) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(pixel_ids.size()), dense.channels());
  for (std::size_t i = 0; i < pixel_ids.size(); ++i) {
    const auto p = pixel_ids[i];
    if (p < 0 || p >= dense.pixels())
      throw Error(ErrorCode::PixelOutOfRange, "pixel id " + std::to_string(p) + " outside " +
                                                  std::to_string(dense.height) + "x" + std::to_string(dense.width));
    rows.row(static_cast<Eigen::Index>(i)) = dense.data.row(p);
  }
  return BasisStack(std::move(rows));
}

BasisStack flatten_to_stack(const MultiScaleBases& ms, const std::vector<std::int64_t>& pixel_ids) {
  for (const auto p : pixel_ids)
    if (p < 0 || p >= std::int64_t(ms.height()) * ms.width())
      throw Error(ErrorCode::PixelOutOfRange, "pixel id " + std::to_string(p) + " outside the image");
  return gather_rows(flatten_dense(ms), pixel_ids);
}

Eigen::VectorXd logits_at_scale(const MultiScaleBases& ms, const ScaleWeights& w, int scale) {
  if (scale < 0 || scale > ms.finest_scale())
    throw Error(ErrorCode::ScaleOutOfRange, "scale " + std::to_string(scale) + " outside [0, " +
                                                std::to_string(ms.finest_scale()) + "]");
  if (static_cast<int>(w.levels.size()) != ms.num_levels())
    throw Error(ErrorCode::DimensionMismatch, "scale weights do not match the pyramid depth");
  const Eigen::Index n = Eigen::Index(ms.height()) * ms.width();
  // Same accumulation order as core::affine_logits over flatten_dense.
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
  core::accumulate_column(acc, Eigen::VectorXd::Ones(n), w.bias);
  for (int k = 0; k <= scale; ++k) {
    if (w.levels[k].size() != ms.level(k).channels())
      throw Error(ErrorCode::DimensionMismatch, "level " + std::to_string(k) + " weight count mismatch");
    const Fieldd up = ms.upsampled(k);
    for (int c = 0; c < up.channels(); ++c) core::accumulate_column(acc, up.data.col(c), w.levels[k](c));
  }
  return acc;
}

DepthGrid reconstruct_at_scale(const MultiScaleBases& ms, const ScaleWeights& w, const DepthActivation& act,
                               int scale) {
  return DepthGrid(ms.height(), ms.width(), forward(act, logits_at_scale(ms, w, scale)));
}

std::vector<Fieldd> flatten_to_stack_backward(const MultiScaleBases& ms, const std::vector<std::int64_t>& pixel_ids,
                                              const Eigen::MatrixXd& grad_rows) {
  if (grad_rows.rows() != static_cast<Eigen::Index>(pixel_ids.size()) || grad_rows.cols() != ms.total_dim())
    throw Error(ErrorCode::DimensionMismatch, "gradient rows do not match the gathered stack");
  Fieldd scattered(ms.height(), ms.width(), ms.total_dim());
  for (std::size_t i = 0; i < pixel_ids.size(); ++i) {
    const auto p = pixel_ids[i];
    if (p < 0 || p >= scattered.pixels()) throw Error(ErrorCode::PixelOutOfRange, "pixel id out of range");
    scattered.data.row(p) += grad_rows.row(static_cast<Eigen::Index>(i));
  }
  std::vector<Fieldd> grads;
  for (int k = 0; k < ms.num_levels(); ++k) {
    Fieldd block(ms.height(), ms.width(), scattered.data.middleCols(ms.weight_offset(k), ms.level(k).channels()));
    grads.push_back(upsample_bilinear_adjoint(block, ms.level(k).height, ms.level(k).width));
  }
  return grads;
}

}  // namespace basisfit
