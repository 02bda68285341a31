#include "magc/transforms/map_raster.hpp"

#include <string>

#include "magc/error.hpp"

namespace magc {

void MapRaster::validate() const {
  check(width > 0 && height > 0, "map raster has zero size", ErrorCode::kFormat);
  check(num_classes >= 1 && num_classes <= 255, "map raster class count out of range", ErrorCode::kFormat);
  check(classes.size() == width * height, "map raster data length does not match its dimensions", ErrorCode::kFormat);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] >= num_classes) {
      fail(ErrorCode::kFormat, "map raster value " + std::to_string(classes[i]) + " at index " + std::to_string(i) +
                                   " is not below the class count " + std::to_string(num_classes));
    }
  }
}

template <typename T>
Tensor<T> one_hot(std::span<const MapRaster> maps) {
  check(!maps.empty(), "one_hot: no maps given");
  const MapRaster& first = maps.front();
  const std::size_t c = first.num_classes, h = first.height, w = first.width;
  Tensor<T> out(Shape{maps.size(), c, h, w}, T(0));
  T* dst = out.mutable_ptr();
  for (std::size_t n = 0; n < maps.size(); ++n) {
    const MapRaster& m = maps[n];
    check(m.width == w && m.height == h && m.num_classes == c, "one_hot: maps differ in size or class count");
    m.validate();
    for (std::size_t i = 0; i < h * w; ++i) dst[(n * c + m.classes[i]) * h * w + i] = T(1);
  }
  return out;
}

template Tensor<float> one_hot<float>(std::span<const MapRaster>);
template Tensor<double> one_hot<double>(std::span<const MapRaster>);

}  // namespace magc
