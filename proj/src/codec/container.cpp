#include "magc/codec/container.hpp"

#include <string>

#include "magc/error.hpp"
#include "magc/io/bytes.hpp"

namespace magc {
namespace {

void put_section(ByteWriter& w, const std::vector<std::uint8_t>& s) {
  check(s.size() <= 0xFFFFFFFFu, "container: section too large");
  w.u32(static_cast<std::uint32_t>(s.size()));
  w.bytes(s);
}

std::vector<std::uint8_t> get_section(ByteReader& r, const std::string& name) {
  const std::uint32_t len = r.u32();
  if (len > r.remaining()) {
    fail(ErrorCode::kFormat, "container: " + name + " declares " + std::to_string(len) + " bytes but only " +
                                 std::to_string(r.remaining()) + " remain");
  }
  const auto b = r.bytes(len);
  return {b.begin(), b.end()};
}

}  // namespace

std::vector<std::uint8_t> serialize_container(const Container& c) {
  check(c.slices.size() == c.header.K, "container: slice count does not match K");
  ByteWriter payload;
  put_section(payload, c.hyper);
  for (const auto& s : c.slices) put_section(payload, s);

  const ContainerHeader& h = c.header;
  ByteWriter w;
  w.text("MAGC");
  w.u8(h.version);
  w.u8(h.flags);
  w.u32(h.width);
  w.u32(h.height);
  w.u8(h.latent_c);
  w.u16(h.latent_h);
  w.u16(h.latent_w);
  w.u16(h.N);
  w.u16(h.M);
  w.u8(h.K);
  w.u8(h.lambda_index);
  w.u64(h.model_hash);
  w.u32(crc32(payload.buffer()));
  w.bytes(payload.buffer());
  return w.release();
}

Container parse_container(std::span<const std::uint8_t> bytes, bool verify_crc) {
  ByteReader r(bytes, "container");
  if (bytes.size() < kContainerHeaderBytes || r.text(4) != "MAGC") fail(ErrorCode::kFormat, "container: not a .magc stream");
  Container c;
  ContainerHeader& h = c.header;
  h.version = r.u8();
  if (h.version != kContainerVersion) {
    fail(ErrorCode::kFormat, "container: unsupported version " + std::to_string(h.version) + " (expected " +
                                 std::to_string(kContainerVersion) + ")");
  }
  h.flags = r.u8();
  h.width = r.u32();
  h.height = r.u32();
  h.latent_c = r.u8();
  h.latent_h = r.u16();
  h.latent_w = r.u16();
  h.N = r.u16();
  h.M = r.u16();
  h.K = r.u8();
  h.lambda_index = r.u8();
  h.model_hash = r.u64();
  const std::uint32_t stored_crc = r.u32();
  if (verify_crc) {
    const std::uint32_t actual = crc32(bytes.subspan(r.position()));
    if (actual != stored_crc) fail(ErrorCode::kFormat, "container: payload checksum mismatch");
  }
  c.hyper = get_section(r, "hyper section");
  for (std::uint8_t i = 0; i < h.K; ++i) c.slices.push_back(get_section(r, "slice section " + std::to_string(i)));
  if (r.remaining() != 0) fail(ErrorCode::kFormat, "container: " + std::to_string(r.remaining()) + " trailing bytes");
  return c;
}

}  // namespace magc
