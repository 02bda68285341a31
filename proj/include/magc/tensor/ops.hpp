#pragma once

// Differentiable tensor operations. Image tensors are NCHW. Every op checks
// shapes up front, rejects non-finite results, and records a backward closure
// on the thread's tape when gradients are required.

#include <span>
#include <vector>

#include "magc/tensor/tensor.hpp"

namespace magc {

enum class PadMode { kZeros, kReplicate };

struct ConvOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  PadMode pad_mode = PadMode::kZeros;
};

// input (N,C,H,W), weight (O,C,k,k), bias (O) or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, const ConvOptions& opt = {});

// (N, C*r*r, H, W) -> (N, C, H*r, W*r)
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& input, std::size_t r);

// (N, C, H*r, W*r) -> (N, C*r*r, H, W)
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& input, std::size_t r);

// Running statistics for batch_norm. Updated in place in training mode.
template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
};

enum class Phase { kTrain, kEval };

// Per-channel normalization over (N,H,W) without affine parameters.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BatchNormStats<T>& stats,
                     Phase phase, T eps = T(1e-5));

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, T slope);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

// x (N,C,H,W) plus v (N,C,1,1) or (1,C,1,1), broadcast over H,W (and N).
template <typename T>
Tensor<T> add_channel(const Tensor<T>& x, const Tensor<T>& v);

// v (C) expanded to (N,C,H,W).
template <typename T>
Tensor<T> expand_channels(const Tensor<T>& v, std::size_t n, std::size_t h,
                          std::size_t w);

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);

template <typename T>
Tensor<T> concat(std::initializer_list<Tensor<T>> parts, std::size_t axis) {
  std::vector<Tensor<T>> v(parts);
  return concat<T>(std::span<const Tensor<T>>(v), axis);
}

// Channels [begin, end) of an NCHW tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin,
                         std::size_t end);

// Non-overlapping factor x factor mean pooling.
template <typename T>
Tensor<T> avg_downsample(const Tensor<T>& x, std::size_t factor);

template <typename T>
Tensor<T> softplus(const Tensor<T>& x);
template <typename T>
Tensor<T> exp(const Tensor<T>& x);
// max(x, floor); gradient passes only where x > floor.
template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T floor);

// Forward rounds half away from zero; backward is the identity.
template <typename T>
Tensor<T> ste_round(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
// mean((a-b)^2)
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);
// sum(w * x) for a constant weight tensor w.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const Tensor<T>& w);

}  // namespace magc
