#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "magc/io/image.hpp"
#include "magc/tensor/adam.hpp"
#include "magc/transforms/layers.hpp"

namespace magc {

struct AutoencoderConfig {
  std::size_t factor = 8;           // spatial reduction, a power of two
  std::size_t latent_channels = 4;
  std::size_t base_width = 64;      // channels at full resolution
  std::size_t max_width = 128;      // cap for the doubled widths at coarser levels

  static AutoencoderConfig paper();
  static AutoencoderConfig desk();
  void validate() const;
  std::size_t levels() const;
  std::size_t width_at(std::size_t level) const;
};

// Deterministic convolutional autoencoder between RGB images in [0, 1] and
// latent_channels-channel latents at 1/factor resolution.
//
// Encoder: conv_in, then per level a stride-2 conv and a ResBlock, then
// conv_out scaled by latent_gain. Decoder: the mirror, with pixel-shuffle
// upsampling. latent_gain is a fixed buffer set after training so the
// latents have a chosen standard deviation.
class PixelAutoencoder {
 public:
  PixelAutoencoder(const AutoencoderConfig& config, std::uint64_t seed);

  const AutoencoderConfig& config() const { return config_; }

  // (N, 3, H, W) -> (N, latent_channels, H / factor, W / factor)
  Tensor<float> encode(const Tensor<float>& x) const;
  // Inverse direction, unclamped.
  Tensor<float> decode(const Tensor<float>& z) const;

  // (1, latent_channels, h, w), computed without gradient tracking.
  Tensor<float> encode_image(const Image& image) const;
  // Sample n of a latent batch, decoded and clamped to [0, 1].
  Image decode_latent(const Tensor<float>& z, std::size_t n = 0) const;

  float latent_gain() const { return latent_gain_.item(); }
  void set_latent_gain(float gain);

  // vae.enc.* and vae.dec.*; vae.enc.latent_gain is listed as a buffer.
  ParamList<float> params() const;

  std::vector<std::uint8_t> checkpoint_bytes() const;
  std::uint64_t hash() const;
  void save(const std::filesystem::path& path) const;
  static PixelAutoencoder from_checkpoint(std::span<const std::uint8_t> bytes);
  static PixelAutoencoder load(const std::filesystem::path& path);

 private:
  AutoencoderConfig config_;
  Conv2d<float> enc_in_;
  std::vector<Conv2d<float>> enc_down_;
  std::vector<ResBlock<float>> enc_blocks_;
  Conv2d<float> enc_out_;
  Tensor<float> latent_gain_;
  Conv2d<float> dec_in_;
  std::vector<ResBlock<float>> dec_blocks_;
  std::vector<Conv2d<float>> dec_up_;
  Conv2d<float> dec_out_;
};

struct AutoencoderTrainOptions {
  std::size_t steps = 2000;
  std::size_t batch = 8;
  double lr = 1e-3;
  std::size_t warmup = 100;
  std::uint64_t seed = 0;
  // Latents are rescaled to this standard deviation after training; 0 keeps
  // the current gain.
  double target_latent_std = 5.0;
};

// Minimizes the mean squared reconstruction error over random minibatches.
// Throws ErrorCode::kNumeric, including the recent loss trace, if the loss
// stops being finite.
TrainTrace train_autoencoder(PixelAutoencoder& model, std::span<const Image> images,
                             const AutoencoderTrainOptions& options, const StepCallback& on_step = {});

// Standard deviation of all latent values of |images| at the current gain.
double latent_std(const PixelAutoencoder& model, std::span<const Image> images);

}  // namespace magc
