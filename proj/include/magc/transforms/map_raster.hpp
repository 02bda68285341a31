#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "magc/tensor/tensor.hpp"

namespace magc {

// Integer class grid paired with an image (the rasterized vector map).
struct MapRaster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t num_classes = 0;
  std::vector<std::uint8_t> classes;  // row-major, height * width

  MapRaster() = default;
  MapRaster(std::size_t w, std::size_t h, std::size_t n, std::uint8_t fill = 0)
      : width(w), height(h), num_classes(n), classes(w * h, fill) {}

  std::uint8_t at(std::size_t y, std::size_t x) const { return classes[y * width + x]; }
  std::uint8_t& at(std::size_t y, std::size_t x) { return classes[y * width + x]; }

  // Throws a format error unless the grid is complete and every value is a
  // valid class id.
  void validate() const;
};

// (N, num_classes, H, W) indicator tensor. All maps must share dimensions
// and class count.
template <typename T>
Tensor<T> one_hot(std::span<const MapRaster> maps);

}  // namespace magc
