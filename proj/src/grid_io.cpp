#include "basisfit/grid_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace basisfit {

namespace {

template <typename UInt>
void put_le(std::vector<std::uint8_t>& out, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename UInt>
UInt get_le(const std::uint8_t* p) {
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(p[i]) << (8 * i);
  return v;
}

std::size_t dtype_size(GridDType d) { return d == GridDType::Float32 ? 4 : 8; }

}  // namespace

std::vector<std::uint8_t> encode_grid(const Fieldd& field, GridDType dtype) {
  if (field.height < 0 || field.width < 0) throw Error(ErrorCode::Format, "negative grid dimensions");
  if (!field.data.allFinite()) throw Error(ErrorCode::Format, "grid contains NaN or Inf");
  std::vector<std::uint8_t> out;
  out.reserve(kGridHeaderBytes + static_cast<std::size_t>(field.data.size()) * dtype_size(dtype));
  for (const char ch : {'D', 'B', 'F', '1'}) out.push_back(static_cast<std::uint8_t>(ch));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(field.height));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(field.width));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(field.channels()));
  out.push_back(static_cast<std::uint8_t>(dtype));
  // Column-major storage is already channel-planar.
  const double* values = field.data.data();
  for (Eigen::Index i = 0; i < field.data.size(); ++i) {
    if (dtype == GridDType::Float32)
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
    else
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(values[i]));
  }
  return out;
}

GridFile decode_grid(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kGridHeaderBytes)
    throw Error(ErrorCode::Format, "grid file shorter than its " + std::to_string(kGridHeaderBytes) + "-byte header");
  if (std::memcmp(bytes.data(), "DBF1", 4) != 0) throw Error(ErrorCode::Format, "bad magic, expected DBF1");
  const auto h = get_le<std::uint32_t>(bytes.data() + 4);
  const auto w = get_le<std::uint32_t>(bytes.data() + 8);
  const auto c = get_le<std::uint32_t>(bytes.data() + 12);
  const std::uint8_t raw_dtype = bytes[16];
  if (raw_dtype > 1) throw Error(ErrorCode::Format, "unknown dtype " + std::to_string(raw_dtype));
  const auto dtype = static_cast<GridDType>(raw_dtype);

  const std::uint64_t count = std::uint64_t(h) * w * c;
  const std::uint64_t expected = count * dtype_size(dtype);
  const std::uint64_t actual = bytes.size() - kGridHeaderBytes;
  if (actual != expected)
    throw Error(ErrorCode::Format, "payload length " + std::to_string(actual) + " bytes, expected " +
                                       std::to_string(expected) + " for " + std::to_string(h) + "x" +
                                       std::to_string(w) + "x" + std::to_string(c));

  GridFile out;
  out.dtype = dtype;
  out.field = Fieldd(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  double* values = out.field.data.data();
  const std::uint8_t* p = bytes.data() + kGridHeaderBytes;
  for (std::uint64_t i = 0; i < count; ++i) {
    double v;
    if (dtype == GridDType::Float32) {
      v = std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i));
    } else {
      v = std::bit_cast<double>(get_le<std::uint64_t>(p + 8 * i));
    }
    if (!std::isfinite(v)) throw Error(ErrorCode::Format, "non-finite value at payload index " + std::to_string(i));
    values[i] = v;
  }
  return out;
}

void write_grid(const std::filesystem::path& path, const Fieldd& field, GridDType dtype) {
  const auto bytes = encode_grid(field, dtype);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Format, "cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(ErrorCode::Format, "failed writing " + path.string());
}

GridFile read_grid(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Format, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return decode_grid(bytes);
  } catch (const Error& e) {
    throw Error(ErrorCode::Format, path.string() + ": " + e.what());
  }
}

Fieldd depth_to_field(const DepthGrid& grid) {
  Fieldd f(grid.height, grid.width, 1);
  for (Eigen::Index i = 0; i < grid.pixels(); ++i) f.data(i, 0) = grid.valid(i) ? grid.depth(i) : 0.0;
  return f;
}

DepthGrid field_to_depth(const Fieldd& field) {
  if (field.channels() < 1) throw Error(ErrorCode::DimensionMismatch, "depth grid needs one channel");
  DepthGrid g(field.height, field.width, field.data.col(0));
  g.valid = g.depth.array() > 0.0;
  return g;
}

SparseDepthSet sparse_from_field(const Fieldd& field, double default_sigma) {
  if (field.channels() < 1 || field.channels() > 2)
    throw Error(ErrorCode::DimensionMismatch, "sparse depth file must have 1 or 2 channels");
  std::vector<std::int64_t> ids;
  for (Eigen::Index p = 0; p < field.pixels(); ++p)
    if (field.data(p, 0) > 0.0) ids.push_back(p);
  SparseDepthSet s;
  const auto n = static_cast<Eigen::Index>(ids.size());
  s.depths.resize(n);
  s.sigmas.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto p = ids[static_cast<std::size_t>(i)];
    s.depths(i) = field.data(p, 0);
    s.sigmas(i) = field.channels() == 2 ? field.data(p, 1) : default_sigma;
  }
  s.pixel_ids = std::move(ids);
  return s;
}

Fieldd sparse_to_field(int height, int width, const SparseDepthSet& samples) {
  Fieldd f(height, width, 2);
  for (Eigen::Index i = 0; i < samples.count(); ++i) {
    const auto p = samples.pixel_ids.at(static_cast<std::size_t>(i));
    if (p < 0 || p >= f.pixels()) throw Error(ErrorCode::PixelOutOfRange, "sample pixel outside the grid");
    f.data(p, 0) = samples.depths(i);
    f.data(p, 1) = samples.sigmas(i);
  }
  return f;
}

}  // namespace basisfit
