#include "magc/transforms/layers.hpp"

#include <cmath>

#include "magc/error.hpp"

namespace magc {

template <typename T>
Conv2d<T>::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, Rng& rng)
    : weight(Shape{out, in, kernel, kernel}), bias(Shape{out}) {
  check(kernel % 2 == 1, "Conv2d: kernel size must be odd");
  options.stride = stride;
  options.padding = kernel / 2;
  options.pad_mode = PadMode::kReplicate;
  // He-uniform for LeakyReLU(0.2).
  const double gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(in * kernel * kernel));
  for (T& w : weight.mutable_data()) w = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
  return conv2d(x, weight, bias, options);
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".weight", weight, true});
  out.push_back({prefix + ".bias", bias, true});
}

template <typename T>
void Conv2d<T>::zero() {
  for (T& w : weight.mutable_data()) w = T(0);
  for (T& b : bias.mutable_data()) b = T(0);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels) {
  stats_.running_mean = Tensor<T>(Shape{channels}, T(0));
  stats_.running_var = Tensor<T>(Shape{channels}, T(1));
}

template <typename T>
Tensor<T> BatchNorm2d<T>::operator()(const Tensor<T>& x, Phase phase) const {
  return batch_norm(x, stats_, phase);
}

template <typename T>
void BatchNorm2d<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".running_mean", stats_.running_mean, false});
  out.push_back({prefix + ".running_var", stats_.running_var, false});
}

template <typename T>
SpadeBlock<T>::SpadeBlock(std::size_t channels, std::size_t sem_channels, std::size_t hidden, Rng& rng)
    : bn(channels),
      basic(channels + sem_channels, hidden, rng),
      gamma(hidden, channels, 3, 1, rng),
      beta(hidden, channels, 3, 1, rng) {
  // Start close to plain normalization: gamma ~ 1, beta ~ 0.
  for (T& w : gamma.weight.mutable_data()) w *= T(0.1);
  for (T& b : gamma.bias.mutable_data()) b = T(1);
  for (T& w : beta.weight.mutable_data()) w *= T(0.1);
}

template <typename T>
Tensor<T> SpadeBlock<T>::operator()(const Tensor<T>& f_in, const Tensor<T>& f_sem, Phase phase) const {
  check(f_sem.defined() && f_sem.rank() == 4 && f_in.rank() == 4 && f_sem.dim(0) == f_in.dim(0) &&
            f_sem.dim(2) == f_in.dim(2) && f_sem.dim(3) == f_in.dim(3),
        "SpadeBlock: semantic features " + (f_sem.defined() ? shape_str(f_sem.shape()) : "<none>") +
            " do not match input " + shape_str(f_in.shape()));
  const Tensor<T> f_bn = bn(f_in, phase);
  const Tensor<T> h = basic(concat<T>({f_bn, f_sem}, 1));
  return add(mul(gamma(h), f_bn), beta(h));
}

template <typename T>
void SpadeBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  bn.collect(prefix + ".bn", out);
  basic.collect(prefix + ".basic", out);
  gamma.collect(prefix + ".gamma", out);
  beta.collect(prefix + ".beta", out);
}

template <typename T>
SpadeResBlock<T>::SpadeResBlock(std::size_t channels, std::size_t sem_channels, std::size_t hidden, Rng& rng)
    : spade1(channels, sem_channels, hidden, rng),
      conv1(channels, channels, 3, 1, rng),
      spade2(channels, sem_channels, hidden, rng),
      conv2(channels, channels, 3, 1, rng) {}

template <typename T>
Tensor<T> SpadeResBlock<T>::operator()(const Tensor<T>& x, const Tensor<T>& f_sem, Phase phase) const {
  Tensor<T> h = conv1(lrelu(spade1(x, f_sem, phase)));
  h = conv2(lrelu(spade2(h, f_sem, phase)));
  return add(x, h);
}

template <typename T>
void SpadeResBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  spade1.collect(prefix + ".spade1", out);
  conv1.collect(prefix + ".conv1", out);
  spade2.collect(prefix + ".spade2", out);
  conv2.collect(prefix + ".conv2", out);
}

template <typename T>
ResBlock<T>::ResBlock(std::size_t channels, Rng& rng)
    : conv1(channels, channels, 3, 1, rng), conv2(channels, channels, 3, 1, rng) {}

template <typename T>
Tensor<T> ResBlock<T>::operator()(const Tensor<T>& x) const {
  return add(x, conv2(lrelu(conv1(lrelu(x)))));
}

template <typename T>
void ResBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  conv1.collect(prefix + ".conv1", out);
  conv2.collect(prefix + ".conv2", out);
}

template <typename T>
ConditionalResBlock<T>::ConditionalResBlock(bool use_map, std::size_t channels,
                                            std::size_t sem_channels, std::size_t hidden, Rng& rng)
    : use_map_(use_map) {
  if (use_map_) {
    spade_ = SpadeResBlock<T>(channels, sem_channels, hidden, rng);
  } else {
    plain_ = ResBlock<T>(channels, rng);
  }
}

template <typename T>
Tensor<T> ConditionalResBlock<T>::operator()(const Tensor<T>& x, const Tensor<T>& f_sem, Phase phase) const {
  return use_map_ ? spade_(x, f_sem, phase) : plain_(x);
}

template <typename T>
void ConditionalResBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  if (use_map_) {
    spade_.collect(prefix, out);
  } else {
    plain_.collect(prefix, out);
  }
}

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class SpadeBlock<float>;
template class SpadeBlock<double>;
template class SpadeResBlock<float>;
template class SpadeResBlock<double>;
template class ResBlock<float>;
template class ResBlock<double>;
template class ConditionalResBlock<float>;
template class ConditionalResBlock<double>;

}  // namespace magc
