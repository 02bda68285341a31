#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "magc/entropy/gaussian.hpp"
#include "magc/rng.hpp"
#include "magc/transforms/layers.hpp"

namespace magc {

// Per-element Gaussian parameters; sigma >= kSigmaFloor.
template <typename T>
struct GaussianField {
  Tensor<T> mu;
  Tensor<T> sigma;
};

// Contiguous channel ranges that split M channels into K slices.
class SliceLayout {
 public:
  SliceLayout() = default;
  SliceLayout(std::size_t channels, std::size_t slices);

  std::size_t slices() const { return ranges_.size(); }
  std::size_t channels() const { return channels_; }
  std::size_t begin(std::size_t i) const { return ranges_.at(i).first; }
  std::size_t end(std::size_t i) const { return ranges_.at(i).second; }
  std::size_t size(std::size_t i) const { return end(i) - begin(i); }

 private:
  std::size_t channels_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> ranges_;
};

// Channel-wise autoregressive predictor. Slice i sees the hyper features gc
// and decoded slices 0..i-1 only:
//   concat(gc, y_hat<i) -> 3x3 conv N -> lrelu -> 3x3 conv N -> lrelu
//     -> mu head, raw head; sigma = max(softplus(raw), 0.01)
template <typename T>
class ContextModel {
 public:
  ContextModel() = default;
  ContextModel(std::size_t gc_channels, std::size_t hidden, const SliceLayout& layout, Rng& rng);

  // |decoded| must hold exactly slices 0..i-1.
  GaussianField<T> predict(const Tensor<T>& gc, std::span<const Tensor<T>> decoded, std::size_t i) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

  const SliceLayout& layout() const { return layout_; }

 private:
  struct Head {
    Conv2d<T> conv1, conv2, mu, raw_sigma;
  };
  SliceLayout layout_;
  std::size_t gc_channels_ = 0;
  std::vector<Head> heads_;
};

// Per-channel Gaussian prior for the side information h_hat.
template <typename T>
class FactorizedPrior {
 public:
  FactorizedPrior() = default;
  explicit FactorizedPrior(std::size_t channels);

  // Field broadcast to (n, C, h, w).
  GaussianField<T> field(std::size_t n, std::size_t h, std::size_t w) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

  std::size_t channels() const { return mu_.numel(); }

 private:
  Tensor<T> mu_;
  Tensor<T> log_sigma_;
};

struct RateEstimate {
  double bits = 0.0;
  std::uint64_t clamped = 0;  // bins whose probability fell below p_min
};

inline constexpr double kRateProbabilityFloor = 1.0 / 65536.0;

// Sum of -log2 p over round(values) with p clamped at 2^-16.
template <typename T>
RateEstimate estimate_rate_discrete(const Tensor<T>& values, const GaussianField<T>& field);

// Differentiable training rate: bits of values + U(-1/2, 1/2) noise.
template <typename T>
Tensor<T> estimate_rate_noise(const Tensor<T>& values, const GaussianField<T>& field, Rng& rng);

// Uniform(-1/2, 1/2) noise of the given shape, no gradient.
template <typename T>
Tensor<T> uniform_noise(const Shape& shape, Rng& rng);

extern template class ContextModel<float>;
extern template class ContextModel<double>;
extern template class FactorizedPrior<float>;
extern template class FactorizedPrior<double>;

}  // namespace magc
