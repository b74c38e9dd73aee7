#pragma once

// GridFile ("DBF1") layout, all integers little-endian:
//
//   offset 0   4 bytes   magic "DBF1"
//   offset 4   u32       height
//   offset 8   u32       width
//   offset 12  u32       channels
//   offset 16  u8        dtype (0 = float32, 1 = float64)
//   offset 17  payload   channel-planar, row-major, little-endian IEEE floats
//
// The payload must be exactly height * width * channels * sizeof(dtype) bytes and
// contain only finite values.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "basisfit/fitter.hpp"
#include "basisfit/grid.hpp"

namespace basisfit {

enum class GridDType : std::uint8_t { Float32 = 0, Float64 = 1 };

inline constexpr std::size_t kGridHeaderBytes = 17;

struct GridFile {
  Fieldd field;
  GridDType dtype = GridDType::Float64;
};

std::vector<std::uint8_t> encode_grid(const Fieldd& field, GridDType dtype);
GridFile decode_grid(std::span<const std::uint8_t> bytes);

void write_grid(const std::filesystem::path& path, const Fieldd& field, GridDType dtype = GridDType::Float64);
GridFile read_grid(const std::filesystem::path& path);

/// Single-channel field from a depth grid; invalid pixels are written as 0.
Fieldd depth_to_field(const DepthGrid& grid);
/// Channel 0 as depth; pixels with depth <= 0 are marked invalid.
DepthGrid field_to_depth(const Fieldd& field);

/// Sparse depth image: channel 0 depth (0 = no sample), optional channel 1 sigma.
/// Samples are listed in row-major pixel order.
SparseDepthSet sparse_from_field(const Fieldd& field, double default_sigma);
Fieldd sparse_to_field(int height, int width, const SparseDepthSet& samples);

}  // namespace basisfit
