#pragma once

#include <span>
#include <vector>

#include "magc/transforms/layers.hpp"
#include "magc/transforms/map_raster.hpp"

namespace magc {

struct TransformConfig {
  std::size_t N = 128;              // intermediate feature channels
  std::size_t M = 64;               // channels of y
  std::size_t latent_channels = 4;  // channels of z
  std::size_t scales = 2;           // stride-2 steps in ga / gs
  std::size_t map_classes = 4;
  std::size_t spade_hidden = 64;
  bool use_map = true;  // false: plain ResBlocks, no semantic encoder

  static TransformConfig paper();
  static TransformConfig desk();
  void validate() const;
};

// One-hot map -> mean-pooled to the latent grid -> two 3x3 conv + LeakyReLU
// layers with spade_hidden output channels.
template <typename T>
class SemanticEncoder {
 public:
  SemanticEncoder() = default;
  SemanticEncoder(std::size_t map_classes, std::size_t hidden, Rng& rng);

  // |maps| dims must be integer multiples of (th, tw).
  Tensor<T> operator()(std::span<const MapRaster> maps, std::size_t th, std::size_t tw) const;
  Tensor<T> operator()(const Tensor<T>& one_hot_maps, std::size_t th, std::size_t tw) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

  std::size_t channels() const { return conv2.out_channels(); }

  Conv2d<T> conv1;
  Conv2d<T> conv2;
};

// f_sem at the full latent grid followed by successive 2x mean-pooled
// copies; entry s matches the feature size at scale s.
template <typename T>
std::vector<Tensor<T>> semantic_pyramid(const Tensor<T>& f_sem, std::size_t levels);

// ga: z -> y
template <typename T>
class AnalysisTransform {
 public:
  AnalysisTransform() = default;
  AnalysisTransform(const TransformConfig& config, Rng& rng);

  // |sem| holds at least config.scales levels when the map is in use and
  // may be empty otherwise.
  Tensor<T> operator()(const Tensor<T>& z, std::span<const Tensor<T>> sem, Phase phase) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

 private:
  TransformConfig config_;
  Conv2d<T> conv_in_;
  std::vector<ConditionalResBlock<T>> blocks_;
  std::vector<Conv2d<T>> downs_;
};

// gs: y_hat -> z_hat, mirroring ga with pixel-shuffle upsampling.
template <typename T>
class SynthesisTransform {
 public:
  SynthesisTransform() = default;
  SynthesisTransform(const TransformConfig& config, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& y_hat, std::span<const Tensor<T>> sem, Phase phase) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

 private:
  TransformConfig config_;
  Conv2d<T> conv_in_;
  std::vector<Conv2d<T>> ups_;
  std::vector<ConditionalResBlock<T>> blocks_;
  Conv2d<T> conv_out_;
};

// ha: y (M, hy, wy) -> h (M/2, hy/4, wy/4)
template <typename T>
class HyperAnalysis {
 public:
  HyperAnalysis() = default;
  HyperAnalysis(const TransformConfig& config, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& y) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

 private:
  Conv2d<T> conv1_, conv2_, conv3_;
};

// hs: h_hat -> gc (2M, hy, wy)
template <typename T>
class HyperSynthesis {
 public:
  HyperSynthesis() = default;
  HyperSynthesis(const TransformConfig& config, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& h_hat) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

 private:
  Conv2d<T> conv_in_, up1_, up2_, conv_out_;
};

extern template class SemanticEncoder<float>;
extern template class SemanticEncoder<double>;
extern template class AnalysisTransform<float>;
extern template class AnalysisTransform<double>;
extern template class SynthesisTransform<float>;
extern template class SynthesisTransform<double>;
extern template class HyperAnalysis<float>;
extern template class HyperAnalysis<double>;
extern template class HyperSynthesis<float>;
extern template class HyperSynthesis<double>;

}  // namespace magc
