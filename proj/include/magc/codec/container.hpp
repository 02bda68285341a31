#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace magc {

inline constexpr std::uint8_t kContainerVersion = 1;
inline constexpr std::uint8_t kFlagMapConditioned = 0x01;
inline constexpr std::size_t kContainerHeaderBytes = 37;

struct ContainerHeader {
  std::uint8_t version = kContainerVersion;
  std::uint8_t flags = 0;
  std::uint32_t width = 0;   // source image
  std::uint32_t height = 0;
  std::uint8_t latent_c = 0;
  std::uint16_t latent_h = 0;
  std::uint16_t latent_w = 0;
  std::uint16_t N = 0;
  std::uint16_t M = 0;
  std::uint8_t K = 0;
  std::uint8_t lambda_index = 0;
  std::uint64_t model_hash = 0;

  bool map_conditioned() const { return (flags & kFlagMapConditioned) != 0; }
  bool operator==(const ContainerHeader&) const = default;
};

// "MAGC", the header fields above little-endian, crc32 of the payload, then
// the payload: hyper section and K slice sections, each a u32 length
// followed by that many bytes.
struct Container {
  ContainerHeader header;
  std::vector<std::uint8_t> hyper;
  std::vector<std::vector<std::uint8_t>> slices;

  bool operator==(const Container&) const = default;
};

std::vector<std::uint8_t> serialize_container(const Container& c);

// Throws a format error on bad magic, unsupported version, length
// mismatches, a slice count different from K, or (when |verify_crc|) a
// checksum failure.
Container parse_container(std::span<const std::uint8_t> bytes, bool verify_crc = true);

}  // namespace magc
