#include "patchage/checkpoint.hpp"

#include <cstring>
#include <set>

#include "detail/binary_io.hpp"
#include "detail/file_io.hpp"
#include "patchage/error.hpp"

namespace patchage {

namespace {
constexpr std::uint32_t kDtypeFloat64 = 1;
}

std::vector<unsigned char> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kCheckpointMagic, 4));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  std::set<std::string> seen;
  for (const auto& t : tensors) {
    if (!seen.insert(t.name).second) throw ConfigError("checkpoint: duplicate tensor name '" + t.name + "'");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.put_bytes(t.name);
    w.put<std::uint32_t>(kDtypeFloat64);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.tensor.rank()));
    for (auto extent : t.tensor.shape()) w.put<std::uint64_t>(extent);
  }
  for (const auto& t : tensors) {
    for (double v : t.tensor.values()) w.put<double>(v);
  }
  const auto& bytes = w.bytes();
  const std::uint64_t checksum = detail::fnv1a64(bytes.data(), bytes.size());
  w.put<std::uint64_t>(checksum);
  return w.bytes();
}

std::vector<NamedTensor> decode_checkpoint(const std::vector<unsigned char>& bytes,
                                           const std::string& context) {
  if (bytes.size() < 4 + 4 + 4 + 8) throw ArtifactError(context + ": truncated file");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw ArtifactError(context + ": bad magic, not a PGA1 checkpoint");
  }
  const std::size_t body = bytes.size() - 8;
  detail::ByteReader trailer(bytes.data() + body, 8, context);
  if (trailer.get<std::uint64_t>() != detail::fnv1a64(bytes.data(), body)) {
    throw ArtifactError(context + ": checksum mismatch (corrupt checkpoint)");
  }

  detail::ByteReader r(bytes.data() + 4, body - 4, context);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ArtifactError(context + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<std::pair<std::string, Shape>> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name = r.get_bytes(name_len);
    const auto dtype = r.get<std::uint32_t>();
    if (dtype != kDtypeFloat64) {
      throw ArtifactError(context + ": tensor '" + name + "' has unsupported dtype " + std::to_string(dtype));
    }
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& extent : shape) {
      extent = r.get<std::uint64_t>();
      if (extent == 0) throw ArtifactError(context + ": tensor '" + name + "' has a zero extent");
    }
    manifest.emplace_back(std::move(name), std::move(shape));
  }
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (auto& [name, shape] : manifest) {
    const std::size_t n = shape_numel(shape);
    if (r.remaining() / 8 < n) throw ArtifactError(context + ": truncated payload for '" + name + "'");
    std::vector<double> values(n);
    for (auto& v : values) v = r.get<double>();
    out.push_back({name, Tensor(shape, std::move(values))});
  }
  if (r.remaining() != 0) throw ArtifactError(context + ": trailing bytes after payload");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  detail::write_file_atomic(path, encode_checkpoint(tensors));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file_bytes(path), path.string());
}

}  // namespace patchage
