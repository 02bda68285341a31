#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "magc/tensor/tensor.hpp"
#include "magc/transforms/map_raster.hpp"

namespace magc {

// Three-channel planar image with values in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> data;  // 3 * height * width, channel-major

  Image() = default;
  Image(std::size_t w, std::size_t h, float fill = 0.0f) : width(w), height(h), data(3 * w * h, fill) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
};

// Binary PPM (P6) and PGM (P5), 8-bit. Maps are stored as PGM with the class
// id as the gray value.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);
Image decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Image& image);

MapRaster read_map(const std::filesystem::path& path, std::size_t num_classes);
void write_map(const std::filesystem::path& path, const MapRaster& map);

// (N, 3, H, W) batch from same-sized images.
Tensor<float> images_to_tensor(std::span<const Image> images);
// Sample |n| of an (N, 3, H, W) tensor, clamped to [0, 1].
Image tensor_to_image(const Tensor<float>& t, std::size_t n = 0);
// Round-trip through 8-bit quantization, as on disk.
Image quantize8(const Image& image);

}  // namespace magc
