#pragma once

#include <string>

#include "magc/rng.hpp"
#include "magc/tensor/ops.hpp"
#include "magc/tensor/params.hpp"

namespace magc {

inline constexpr double kLeakySlope = 0.2;

template <typename T>
Tensor<T> lrelu(const Tensor<T>& x) {
  return leaky_relu(x, static_cast<T>(kLeakySlope));
}

// Square-kernel convolution with "same"-style replicate padding, so a
// spatially constant input stays constant.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
  void zero();

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }

  Tensor<T> weight;
  Tensor<T> bias;
  ConvOptions options;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels);

  // Training mode updates the running statistics held by this module.
  Tensor<T> operator()(const Tensor<T>& x, Phase phase) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

 private:
  mutable BatchNormStats<T> stats_;
};

// Convolution followed by LeakyReLU(0.2).
template <typename T>
class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(std::size_t in, std::size_t out, Rng& rng) : conv(in, out, 3, 1, rng) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return lrelu(conv(x)); }
  void collect(const std::string& prefix, ParamList<T>& out) const { conv.collect(prefix + ".conv", out); }

  Conv2d<T> conv;
};

// Spatially adaptive denormalization:
//   f_bn  = BatchNorm(f_in)
//   h     = BasicBlk([f_bn, f_sem])
//   f_out = Conv_gamma(h) * f_bn + Conv_beta(h)
template <typename T>
class SpadeBlock {
 public:
  SpadeBlock() = default;
  SpadeBlock(std::size_t channels, std::size_t sem_channels, std::size_t hidden, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& f_in, const Tensor<T>& f_sem, Phase phase) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

  BatchNorm2d<T> bn;
  BasicBlock<T> basic;
  Conv2d<T> gamma;
  Conv2d<T> beta;
};

// x + conv2(lrelu(spade2(conv1(lrelu(spade1(x))))))
template <typename T>
class SpadeResBlock {
 public:
  SpadeResBlock() = default;
  SpadeResBlock(std::size_t channels, std::size_t sem_channels, std::size_t hidden, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& f_sem, Phase phase) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

  SpadeBlock<T> spade1;
  Conv2d<T> conv1;
  SpadeBlock<T> spade2;
  Conv2d<T> conv2;
};

// x + conv2(lrelu(conv1(lrelu(x))))
template <typename T>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(std::size_t channels, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

  Conv2d<T> conv1;
  Conv2d<T> conv2;
};

// SPADE ResBlock when a semantic map is in use, plain ResBlock otherwise.
template <typename T>
class ConditionalResBlock {
 public:
  ConditionalResBlock() = default;
  ConditionalResBlock(bool use_map, std::size_t channels, std::size_t sem_channels,
                      std::size_t hidden, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& f_sem, Phase phase) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

 private:
  bool use_map_ = true;
  SpadeResBlock<T> spade_;
  ResBlock<T> plain_;
};

extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class BatchNorm2d<float>;
extern template class BatchNorm2d<double>;
extern template class SpadeBlock<float>;
extern template class SpadeBlock<double>;
extern template class SpadeResBlock<float>;
extern template class SpadeResBlock<double>;
extern template class ResBlock<float>;
extern template class ResBlock<double>;
extern template class ConditionalResBlock<float>;
extern template class ConditionalResBlock<double>;

}  // namespace magc
