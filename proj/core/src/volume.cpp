#include "patchage/volume.hpp"

#include <cmath>
#include <cstring>

#include "detail/binary_io.hpp"
#include "detail/file_io.hpp"
#include "patchage/error.hpp"

namespace patchage {

std::string extent_str(const Extent3& e) {
  return std::to_string(e[0]) + "x" + std::to_string(e[1]) + "x" + std::to_string(e[2]);
}

Volume::Volume(Extent3 dims, Spacing3 spacing)
    : dims_(dims), spacing_(spacing), values_(dims[0] * dims[1] * dims[2], 0.0) {}

Volume::Volume(Extent3 dims, std::vector<double> values, Spacing3 spacing)
    : dims_(dims), spacing_(spacing), values_(std::move(values)) {
  if (values_.size() != dims[0] * dims[1] * dims[2]) {
    throw ShapeError("volume " + extent_str(dims) + " needs " +
                     std::to_string(dims[0] * dims[1] * dims[2]) + " values, got " +
                     std::to_string(values_.size()));
  }
}

namespace {
constexpr char kPgvMagic[4] = {'P', 'G', 'V', '1'};
constexpr std::uint32_t kPgvFloat32 = 1;
constexpr std::size_t kPgvHeaderBytes = 4 + 4 * 4 + 3 * 8;
}  // namespace

void write_volume(const std::filesystem::path& path, const Volume& volume) {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kPgvMagic, 4));
  for (auto extent : volume.dims()) w.put<std::uint32_t>(static_cast<std::uint32_t>(extent));
  w.put<std::uint32_t>(kPgvFloat32);
  for (double s : volume.spacing()) w.put<double>(s);
  for (double v : volume.values()) w.put<float>(static_cast<float>(v));
  detail::write_file_atomic(path, w.bytes());
}

Volume read_pgv(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  const std::string context = path.string();
  if (bytes.size() < kPgvHeaderBytes || std::memcmp(bytes.data(), kPgvMagic, 4) != 0) {
    throw ArtifactError(context + ": not a PGV1 volume");
  }
  detail::ByteReader r(bytes.data() + 4, bytes.size() - 4, context);
  Extent3 dims{};
  for (auto& extent : dims) extent = r.get<std::uint32_t>();
  const auto dtype = r.get<std::uint32_t>();
  if (dtype != kPgvFloat32) throw ArtifactError(context + ": unsupported dtype code " + std::to_string(dtype));
  Spacing3 spacing{};
  for (auto& s : spacing) s = r.get<double>();
  const std::size_t n = dims[0] * dims[1] * dims[2];
  if (n == 0) throw ArtifactError(context + ": empty volume " + extent_str(dims));
  if (r.remaining() != n * sizeof(float)) {
    throw ArtifactError(context + ": payload has " + std::to_string(r.remaining()) + " bytes, expected " +
                        std::to_string(n * sizeof(float)));
  }
  std::vector<double> values(n);
  for (auto& v : values) v = r.get<float>();
  return Volume(dims, std::move(values), spacing);
}

Volume read_nifti(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  const std::string context = path.string();
  if (bytes.size() < 348) throw ArtifactError(context + ": too short for a NIfTI-1 header");
  detail::ByteReader header(bytes.data(), bytes.size(), context);
  const auto sizeof_hdr = header.get<std::int32_t>();
  if (sizeof_hdr != 348) {
    if (sizeof_hdr == 0x5C010000) throw ArtifactError(context + ": big-endian NIfTI is not supported");
    throw ArtifactError(context + ": not a NIfTI-1 file (sizeof_hdr=" + std::to_string(sizeof_hdr) + ")");
  }
  if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0) {
    throw ArtifactError(context + ": only single-file NIfTI-1 (magic n+1) is supported");
  }
  auto read_at = [&](std::size_t offset, auto tag) {
    using T = decltype(tag);
    detail::ByteReader r(bytes.data() + offset, bytes.size() - offset, context);
    return r.template get<T>();
  };
  std::array<std::int16_t, 8> dim{};
  for (std::size_t i = 0; i < 8; ++i) dim[i] = read_at(40 + 2 * i, std::int16_t{});
  const auto datatype = read_at(70, std::int16_t{});
  std::array<float, 8> pixdim{};
  for (std::size_t i = 0; i < 8; ++i) pixdim[i] = read_at(76 + 4 * i, float{});
  const float vox_offset = read_at(108, float{});
  const float scl_slope = read_at(112, float{});
  const float scl_inter = read_at(116, float{});

  if (datatype != 16) {
    throw ArtifactError(context + ": unsupported NIfTI datatype " + std::to_string(datatype) +
                        " (only float32 = 16)");
  }
  if (dim[0] < 3 || dim[0] > 4 || (dim[0] == 4 && dim[4] != 1)) {
    throw ArtifactError(context + ": only single-frame 3D NIfTI volumes are supported");
  }
  for (int i = 1; i <= 3; ++i) {
    if (dim[i] < 1) throw ArtifactError(context + ": invalid dimension " + std::to_string(dim[i]));
  }
  const Extent3 dims{static_cast<std::size_t>(dim[1]), static_cast<std::size_t>(dim[2]),
                     static_cast<std::size_t>(dim[3])};
  const std::size_t n = dims[0] * dims[1] * dims[2];
  const auto offset = static_cast<std::size_t>(vox_offset);
  if (offset < 348 || bytes.size() < offset + n * sizeof(float)) {
    throw ArtifactError(context + ": voxel data is truncated or vox_offset is invalid");
  }
  const bool scaled = scl_slope != 0.0f && std::isfinite(scl_slope) && !(scl_slope == 1.0f && scl_inter == 0.0f);
  detail::ByteReader r(bytes.data() + offset, n * sizeof(float), context);
  std::vector<double> values(n);
  for (auto& v : values) {
    const double raw = r.get<float>();
    v = scaled ? raw * scl_slope + scl_inter : raw;
  }
  Spacing3 spacing{};
  for (int i = 0; i < 3; ++i) spacing[i] = pixdim[i + 1] > 0.0f ? pixdim[i + 1] : 1.0;
  return Volume(dims, std::move(values), spacing);
}

Volume read_volume(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kPgvMagic, 4) == 0) return read_pgv(path);
  if (bytes.size() >= 348) return read_nifti(path);
  throw ArtifactError(path.string() + ": unrecognized volume format");
}

}  // namespace patchage
