#include "magc/transforms/transforms.hpp"

#include <string>

#include "magc/error.hpp"

namespace magc {
namespace {

std::string idx(const std::string& prefix, const char* name, std::size_t i) {
  return prefix + "." + name + std::to_string(i);
}

void check_nchw(const Shape& s, const char* who) {
  check(s.size() == 4, std::string(who) + ": expected an NCHW tensor, got " + shape_str(s));
}

}  // namespace

TransformConfig TransformConfig::paper() { return TransformConfig{}; }

TransformConfig TransformConfig::desk() {
  TransformConfig c;
  c.N = 32;
  c.M = 16;
  c.spade_hidden = 16;
  return c;
}

void TransformConfig::validate() const {
  check(N >= 1 && M >= 1 && latent_channels >= 1 && scales >= 1, "transform config: N, M, latent_channels and scales must be positive");
  check(M <= N, "transform config: M must not exceed N");
  check(M % 2 == 0, "transform config: M must be even");
  check(!use_map || (map_classes >= 1 && spade_hidden >= 1), "transform config: map_classes and spade_hidden must be positive");
}

template <typename T>
SemanticEncoder<T>::SemanticEncoder(std::size_t map_classes, std::size_t hidden, Rng& rng)
    : conv1(map_classes, hidden, 3, 1, rng), conv2(hidden, hidden, 3, 1, rng) {}

template <typename T>
Tensor<T> SemanticEncoder<T>::operator()(std::span<const MapRaster> maps, std::size_t th, std::size_t tw) const {
  return (*this)(one_hot<T>(maps), th, tw);
}

template <typename T>
Tensor<T> SemanticEncoder<T>::operator()(const Tensor<T>& one_hot_maps, std::size_t th, std::size_t tw) const {
  check_nchw(one_hot_maps.shape(), "semantic_encode");
  const std::size_t h = one_hot_maps.dim(2), w = one_hot_maps.dim(3);
  check(th > 0 && tw > 0 && h % th == 0 && w % tw == 0 && h / th == w / tw,
        "semantic_encode: map " + std::to_string(h) + "x" + std::to_string(w) + " is not an integer multiple of target " +
            std::to_string(th) + "x" + std::to_string(tw));
  const std::size_t factor = h / th;
  const Tensor<T> pooled = factor > 1 ? avg_downsample(one_hot_maps, factor) : one_hot_maps;
  return lrelu(conv2(lrelu(conv1(pooled))));
}

template <typename T>
void SemanticEncoder<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  conv1.collect(prefix + ".conv1", out);
  conv2.collect(prefix + ".conv2", out);
}

template <typename T>
std::vector<Tensor<T>> semantic_pyramid(const Tensor<T>& f_sem, std::size_t levels) {
  std::vector<Tensor<T>> out;
  out.reserve(levels);
  out.push_back(f_sem);
  for (std::size_t s = 1; s < levels; ++s) out.push_back(avg_downsample(out.back(), 2));
  return out;
}

template <typename T>
AnalysisTransform<T>::AnalysisTransform(const TransformConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  conv_in_ = Conv2d<T>(config.latent_channels, config.N, 3, 1, rng);
  for (std::size_t s = 0; s < config.scales; ++s) {
    blocks_.emplace_back(config.use_map, config.N, config.spade_hidden, config.spade_hidden, rng);
    const std::size_t out = s + 1 == config.scales ? config.M : config.N;
    downs_.emplace_back(config.N, out, 5, 2, rng);
  }
}

template <typename T>
Tensor<T> AnalysisTransform<T>::operator()(const Tensor<T>& z, std::span<const Tensor<T>> sem, Phase phase) const {
  check_nchw(z.shape(), "analysis");
  const std::size_t f = std::size_t{1} << config_.scales;
  check(z.dim(1) == config_.latent_channels, "analysis: expected " + std::to_string(config_.latent_channels) +
                                                 " latent channels, got " + shape_str(z.shape()));
  check(z.dim(2) % f == 0 && z.dim(3) % f == 0,
        "analysis: latent " + shape_str(z.shape()) + " is not divisible by " + std::to_string(f));
  check(!config_.use_map || sem.size() >= config_.scales, "analysis: missing semantic features");
  Tensor<T> x = conv_in_(z);
  for (std::size_t s = 0; s < config_.scales; ++s) {
    x = blocks_[s](x, config_.use_map ? sem[s] : Tensor<T>(), phase);
    x = downs_[s](x);
  }
  return x;
}

template <typename T>
void AnalysisTransform<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  conv_in_.collect(prefix + ".conv_in", out);
  for (std::size_t s = 0; s < blocks_.size(); ++s) {
    blocks_[s].collect(idx(prefix, "block", s), out);
    downs_[s].collect(idx(prefix, "down", s), out);
  }
}

template <typename T>
SynthesisTransform<T>::SynthesisTransform(const TransformConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  conv_in_ = Conv2d<T>(config.M, config.N, 3, 1, rng);
  for (std::size_t s = 0; s < config.scales; ++s) {
    ups_.emplace_back(config.N, 4 * config.N, 3, 1, rng);
    blocks_.emplace_back(config.use_map, config.N, config.spade_hidden, config.spade_hidden, rng);
  }
  conv_out_ = Conv2d<T>(config.N, config.latent_channels, 3, 1, rng);
  for (T& w : conv_out_.weight.mutable_data()) w *= T(0.1);
}

template <typename T>
Tensor<T> SynthesisTransform<T>::operator()(const Tensor<T>& y_hat, std::span<const Tensor<T>> sem, Phase phase) const {
  check_nchw(y_hat.shape(), "synthesis");
  check(y_hat.dim(1) == config_.M, "synthesis: expected " + std::to_string(config_.M) + " channels, got " +
                                       shape_str(y_hat.shape()));
  check(!config_.use_map || sem.size() >= config_.scales, "synthesis: missing semantic features");
  Tensor<T> x = conv_in_(y_hat);
  for (std::size_t i = 0; i < config_.scales; ++i) {
    const std::size_t s = config_.scales - 1 - i;
    x = pixel_shuffle(ups_[s](x), 2);
    x = blocks_[s](x, config_.use_map ? sem[s] : Tensor<T>(), phase);
  }
  return conv_out_(x);
}

template <typename T>
void SynthesisTransform<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  conv_in_.collect(prefix + ".conv_in", out);
  for (std::size_t s = 0; s < blocks_.size(); ++s) {
    ups_[s].collect(idx(prefix, "up", s), out);
    blocks_[s].collect(idx(prefix, "block", s), out);
  }
  conv_out_.collect(prefix + ".conv_out", out);
}

template <typename T>
HyperAnalysis<T>::HyperAnalysis(const TransformConfig& config, Rng& rng)
    : conv1_(config.M, config.N, 3, 1, rng),
      conv2_(config.N, config.N, 5, 2, rng),
      conv3_(config.N, config.M / 2, 5, 2, rng) {}

template <typename T>
Tensor<T> HyperAnalysis<T>::operator()(const Tensor<T>& y) const {
  check_nchw(y.shape(), "hyper_analysis");
  check(y.dim(1) == conv1_.in_channels(), "hyper_analysis: channel mismatch for " + shape_str(y.shape()));
  check(y.dim(2) % 4 == 0 && y.dim(3) % 4 == 0, "hyper_analysis: " + shape_str(y.shape()) + " is not divisible by 4");
  return conv3_(lrelu(conv2_(lrelu(conv1_(y)))));
}

template <typename T>
void HyperAnalysis<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  conv1_.collect(prefix + ".conv1", out);
  conv2_.collect(prefix + ".conv2", out);
  conv3_.collect(prefix + ".conv3", out);
}

template <typename T>
HyperSynthesis<T>::HyperSynthesis(const TransformConfig& config, Rng& rng)
    : conv_in_(config.M / 2, config.N, 3, 1, rng),
      up1_(config.N, 4 * config.N, 3, 1, rng),
      up2_(config.N, 4 * config.N, 3, 1, rng),
      conv_out_(config.N, 2 * config.M, 3, 1, rng) {}

template <typename T>
Tensor<T> HyperSynthesis<T>::operator()(const Tensor<T>& h_hat) const {
  check_nchw(h_hat.shape(), "hyper_synthesis");
  check(h_hat.dim(1) == conv_in_.in_channels(), "hyper_synthesis: channel mismatch for " + shape_str(h_hat.shape()));
  Tensor<T> x = lrelu(conv_in_(h_hat));
  x = lrelu(pixel_shuffle(up1_(x), 2));
  x = lrelu(pixel_shuffle(up2_(x), 2));
  return conv_out_(x);
}

template <typename T>
void HyperSynthesis<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  conv_in_.collect(prefix + ".conv_in", out);
  up1_.collect(prefix + ".up1", out);
  up2_.collect(prefix + ".up2", out);
  conv_out_.collect(prefix + ".conv_out", out);
}

template class SemanticEncoder<float>;
template class SemanticEncoder<double>;
template class AnalysisTransform<float>;
template class AnalysisTransform<double>;
template class SynthesisTransform<float>;
template class SynthesisTransform<double>;
template class HyperAnalysis<float>;
template class HyperAnalysis<double>;
template class HyperSynthesis<float>;
template class HyperSynthesis<double>;
template std::vector<Tensor<float>> semantic_pyramid(const Tensor<float>&, std::size_t);
template std::vector<Tensor<double>> semantic_pyramid(const Tensor<double>&, std::size_t);

}  // namespace magc
