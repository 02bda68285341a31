#include "magc/entropy/entropy_model.hpp"

#include <cmath>
#include <string>

#include "magc/error.hpp"

namespace magc {

SliceLayout::SliceLayout(std::size_t channels, std::size_t slices) : channels_(channels) {
  check(slices >= 1 && slices <= channels, "slice layout: need 1 <= K <= M, got K=" + std::to_string(slices) +
                                               " M=" + std::to_string(channels));
  const std::size_t base = channels / slices;
  const std::size_t extra = channels % slices;
  std::size_t at = 0;
  for (std::size_t i = 0; i < slices; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    ranges_.emplace_back(at, at + len);
    at += len;
  }
}

template <typename T>
ContextModel<T>::ContextModel(std::size_t gc_channels, std::size_t hidden, const SliceLayout& layout, Rng& rng)
    : layout_(layout), gc_channels_(gc_channels) {
  for (std::size_t i = 0; i < layout.slices(); ++i) {
    const std::size_t in = gc_channels + layout.begin(i);
    Head h{Conv2d<T>(in, hidden, 3, 1, rng), Conv2d<T>(hidden, hidden, 3, 1, rng),
           Conv2d<T>(hidden, layout.size(i), 3, 1, rng), Conv2d<T>(hidden, layout.size(i), 3, 1, rng)};
    heads_.push_back(std::move(h));
  }
}

template <typename T>
GaussianField<T> ContextModel<T>::predict(const Tensor<T>& gc, std::span<const Tensor<T>> decoded, std::size_t i) const {
  check(i < heads_.size(), "context_predict: slice index " + std::to_string(i) + " out of range");
  check(decoded.size() == i, "context_predict: slice " + std::to_string(i) + " needs exactly " + std::to_string(i) +
                                 " decoded slices, got " + std::to_string(decoded.size()));
  check(gc.rank() == 4 && gc.dim(1) == gc_channels_, "context_predict: gc shape " + shape_str(gc.shape()));
  std::vector<Tensor<T>> parts{gc};
  for (std::size_t j = 0; j < i; ++j) {
    check(decoded[j].rank() == 4 && decoded[j].dim(1) == layout_.size(j),
          "context_predict: decoded slice " + std::to_string(j) + " has shape " + shape_str(decoded[j].shape()));
    parts.push_back(decoded[j]);
  }
  const Tensor<T> in = parts.size() == 1 ? gc : concat<T>(std::span<const Tensor<T>>(parts), 1);
  const Head& h = heads_[i];
  const Tensor<T> f = lrelu(h.conv2(lrelu(h.conv1(in))));
  return {h.mu(f), clamp_min(softplus(h.raw_sigma(f)), static_cast<T>(kSigmaFloor))};
}

template <typename T>
void ContextModel<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    const std::string p = prefix + ".slice" + std::to_string(i);
    heads_[i].conv1.collect(p + ".conv1", out);
    heads_[i].conv2.collect(p + ".conv2", out);
    heads_[i].mu.collect(p + ".mu", out);
    heads_[i].raw_sigma.collect(p + ".sigma", out);
  }
}

template <typename T>
FactorizedPrior<T>::FactorizedPrior(std::size_t channels)
    : mu_(Shape{channels}, T(0)), log_sigma_(Shape{channels}, T(0)) {}

template <typename T>
GaussianField<T> FactorizedPrior<T>::field(std::size_t n, std::size_t h, std::size_t w) const {
  return {expand_channels(mu_, n, h, w),
          clamp_min(exp(expand_channels(log_sigma_, n, h, w)), static_cast<T>(kSigmaFloor))};
}

template <typename T>
void FactorizedPrior<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".mu", mu_, true});
  out.push_back({prefix + ".log_sigma", log_sigma_, true});
}

template <typename T>
RateEstimate estimate_rate_discrete(const Tensor<T>& values, const GaussianField<T>& field) {
  check(values.shape() == field.mu.shape() && values.shape() == field.sigma.shape(),
        "estimate_rate: shape mismatch " + shape_str(values.shape()));
  RateEstimate r;
  for (std::size_t i = 0; i < values.numel(); ++i) {
    const double s = std::round(static_cast<double>(values.ptr()[i]));
    const double p = gaussian_bin_probability(s, field.mu.ptr()[i], field.sigma.ptr()[i]);
    if (p < kRateProbabilityFloor) {
      ++r.clamped;
      r.bits += 16.0;
    } else {
      r.bits -= std::log2(p);
    }
  }
  return r;
}

template <typename T>
Tensor<T> uniform_noise(const Shape& shape, Rng& rng) {
  Tensor<T> out(shape);
  for (T& v : out.mutable_data()) v = static_cast<T>(rng.uniform() - 0.5);
  return out;
}

template <typename T>
Tensor<T> estimate_rate_noise(const Tensor<T>& values, const GaussianField<T>& field, Rng& rng) {
  return gaussian_bits(add(values, uniform_noise<T>(values.shape(), rng)), field.mu, field.sigma);
}

template class ContextModel<float>;
template class ContextModel<double>;
template class FactorizedPrior<float>;
template class FactorizedPrior<double>;
template RateEstimate estimate_rate_discrete(const Tensor<float>&, const GaussianField<float>&);
template RateEstimate estimate_rate_discrete(const Tensor<double>&, const GaussianField<double>&);
template Tensor<float> uniform_noise<float>(const Shape&, Rng&);
template Tensor<double> uniform_noise<double>(const Shape&, Rng&);
template Tensor<float> estimate_rate_noise(const Tensor<float>&, const GaussianField<float>&, Rng&);
template Tensor<double> estimate_rate_noise(const Tensor<double>&, const GaussianField<double>&, Rng&);

}  // namespace magc
