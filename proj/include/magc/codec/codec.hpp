#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "magc/codec/container.hpp"
#include "magc/codec/lcm_model.hpp"

namespace magc {

struct CompressReport {
  std::size_t file_bytes = 0;
  double bpp = 0.0;                    // 8 * file_bytes / (W * H)
  std::size_t header_bits = 0;         // magic, header, crc and section lengths
  std::size_t hyper_bits = 0;
  std::vector<std::size_t> slice_bits;
  double estimated_bits = 0.0;         // discrete Shannon estimate of all symbols
  double coded_bits = 0.0;             // hyper + slice payload bits
  std::uint64_t clamped_bins = 0;
};

struct CompressResult {
  std::vector<std::uint8_t> bytes;
  Container container;
  Tensor<float> z_hat;  // encoder-side reconstruction, (1, c, h, w)
  CompressReport report;
};

// z0 is (1, c, h, w) with h, w divisible by 2^(scales + 2). |map| must match
// the image size when the model is map-conditioned and is ignored
// otherwise.
CompressResult compress(const LcmModel& model, const Tensor<float>& z0, const MapRaster& map,
                        std::uint32_t image_width, std::uint32_t image_height);

struct LatentSymbols {
  Tensor<float> h_hat;
  std::vector<Tensor<float>> y_slices;  // decoded slices, in order
};

// Entropy-decodes the side information and the first |max_slices| slices.
// Needs no map: slice i depends only on the hyper features and slices < i.
LatentSymbols decode_latent(const Container& container, const LcmModel& model, std::size_t max_slices);

// Full decode to z_hat. Refuses streams whose model hash differs from
// |model| and maps whose size differs from the header.
Tensor<float> decompress(const Container& container, const LcmModel& model, const MapRaster& map);
Tensor<float> decompress(std::span<const std::uint8_t> bytes, const LcmModel& model, const MapRaster& map);

}  // namespace magc
