#pragma once

#include <vector>

#include "magc/rng.hpp"
#include "magc/tensor/tensor.hpp"

namespace magc::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(shape_numel(shape));
  for (T& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>(std::move(shape), std::move(v));
}

}  // namespace magc::testing
