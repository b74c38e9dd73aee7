#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>

#include "basisfit/error.hpp"

namespace basisfit {

/// H x W x C field stored channel-planar: data(pixel, channel) with pixel = row * W + col.
/// Column-major storage makes every channel one contiguous row-major plane.
template <typename Scalar>
struct Field {
  using Storage = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  int height = 0;
  int width = 0;
  Storage data;

  Field() = default;
  Field(int h, int w, int channels) : height(h), width(w), data(Storage::Zero(Eigen::Index(h) * w, channels)) {}
  Field(int h, int w, Storage values) : height(h), width(w), data(std::move(values)) {
    if (data.rows() != Eigen::Index(h) * w)
      throw Error(ErrorCode::DimensionMismatch, "field storage rows do not match height*width");
  }

  Eigen::Index pixels() const { return Eigen::Index(height) * width; }
  int channels() const { return static_cast<int>(data.cols()); }

  Scalar& operator()(int row, int col, int channel) { return data(Eigen::Index(row) * width + col, channel); }
  Scalar operator()(int row, int col, int channel) const { return data(Eigen::Index(row) * width + col, channel); }
};

using Fieldd = Field<double>;

/// Dense depth map [m] with a per-pixel validity mask.
struct DepthGrid {
  int height = 0;
  int width = 0;
  Eigen::VectorXd depth;
  Eigen::Array<bool, Eigen::Dynamic, 1> valid;

  DepthGrid() = default;
  DepthGrid(int h, int w, Eigen::VectorXd values)
      : height(h), width(w), depth(std::move(values)), valid(Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(depth.size(), true)) {
    if (depth.size() != Eigen::Index(h) * w)
      throw Error(ErrorCode::DimensionMismatch, "depth grid size does not match height*width");
  }

  Eigen::Index pixels() const { return depth.size(); }
  double at(int row, int col) const { return depth(Eigen::Index(row) * width + col); }
};

}  // namespace basisfit
