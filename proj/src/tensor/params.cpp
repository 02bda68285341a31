#include "magc/tensor/params.hpp"

#include <unordered_map>

#include "magc/error.hpp"
#include "magc/io/bytes.hpp"

namespace magc {

std::vector<std::uint8_t> serialize_checkpoint(std::span<const CheckpointEntry> entries) {
  ByteWriter w;
  w.text("MGWT");
  w.u8(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const CheckpointEntry& e : entries) {
    check(e.name.size() <= 0xFFFF, "checkpoint: parameter name too long: " + e.name);
    check(e.shape.size() <= 0xFF, "checkpoint: rank too large for " + e.name);
    check(shape_numel(e.shape) == e.values.size(), "checkpoint: shape/value mismatch for " + e.name);
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.text(e.name);
    w.u8(static_cast<std::uint8_t>(e.shape.size()));
    for (std::size_t d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : e.values) w.f32(v);
  }
  return w.release();
}

std::vector<CheckpointEntry> parse_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "checkpoint");
  if (r.text(4) != "MGWT") fail(ErrorCode::kFormat, "checkpoint: bad magic");
  const std::uint8_t version = r.u8();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kFormat, "checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  std::vector<CheckpointEntry> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.text(r.u16());
    const std::uint8_t rank = r.u8();
    for (std::uint8_t d = 0; d < rank; ++d) e.shape.push_back(r.u32());
    const std::size_t n = shape_numel(e.shape);
    if (n > r.remaining() / 4) fail(ErrorCode::kFormat, "checkpoint: truncated values for " + e.name);
    e.values.resize(n);
    for (float& v : e.values) v = r.f32();
    out.push_back(std::move(e));
  }
  if (r.remaining() != 0) fail(ErrorCode::kFormat, "checkpoint: trailing bytes");
  return out;
}

template <typename T>
std::vector<CheckpointEntry> to_entries(const ParamList<T>& params) {
  std::vector<CheckpointEntry> out;
  out.reserve(params.size());
  for (const ParamRef<T>& p : params) {
    CheckpointEntry e{p.name, p.tensor.shape(), {}};
    e.values.reserve(p.tensor.numel());
    for (T v : p.tensor.data()) e.values.push_back(static_cast<float>(v));
    out.push_back(std::move(e));
  }
  return out;
}

template <typename T>
void load_entries(ParamList<T>& params, std::span<const CheckpointEntry> entries) {
  std::unordered_map<std::string, const CheckpointEntry*> by_name;
  for (const CheckpointEntry& e : entries) by_name[e.name] = &e;
  for (ParamRef<T>& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) fail(ErrorCode::kModelMismatch, "checkpoint lacks parameter " + p.name);
    const CheckpointEntry& e = *it->second;
    if (e.shape != p.tensor.shape()) {
      fail(ErrorCode::kModelMismatch, "checkpoint shape " + shape_str(e.shape) + " for " + p.name +
                                          ", model expects " + shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(e.values[i]);
  }
}

template <typename T>
void save_params(const std::filesystem::path& path, const ParamList<T>& params) {
  write_file(path, serialize_params(params));
}

template <typename T>
void load_params(const std::filesystem::path& path, ParamList<T>& params) {
  const auto bytes = read_file(path);
  const auto entries = parse_checkpoint(bytes);
  load_entries(params, entries);
}

template std::vector<CheckpointEntry> to_entries(const ParamList<float>&);
template std::vector<CheckpointEntry> to_entries(const ParamList<double>&);
template void load_entries(ParamList<float>&, std::span<const CheckpointEntry>);
template void load_entries(ParamList<double>&, std::span<const CheckpointEntry>);
template void save_params(const std::filesystem::path&, const ParamList<float>&);
template void save_params(const std::filesystem::path&, const ParamList<double>&);
template void load_params(const std::filesystem::path&, ParamList<float>&);
template void load_params(const std::filesystem::path&, ParamList<double>&);

}  // namespace magc
