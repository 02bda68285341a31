#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "magc/codec/lcm_model.hpp"
#include "magc/tensor/adam.hpp"
#include "magc/transforms/layers.hpp"
#include "magc/transforms/map_raster.hpp"

namespace magc {

// Variance schedule over timesteps t = 0..T with
//   alpha_bar_t = prod_{s <= t} (1 - beta_s).
class NoiseSchedule {
 public:
  // T + 1 betas spaced linearly from beta_start to beta_end.
  static NoiseSchedule linear(std::size_t T = 1000, double beta_start = 1e-4, double beta_end = 0.02);
  explicit NoiseSchedule(std::vector<double> betas);

  std::size_t T() const { return betas_.size() - 1; }
  double beta(std::size_t t) const { return betas_.at(t); }
  double alpha_bar(std::size_t t) const { return alpha_bar_.at(t); }

  // |steps| timesteps for sampling down from t_start, descending:
  // round(t_start * k / steps) for k = steps..1.
  std::vector<std::size_t> respaced(std::size_t t_start, std::size_t steps) const;

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bar_;
};

// sqrt(alpha_bar) * z0 + sqrt(1 - alpha_bar) * eps
template <typename T>
Tensor<T> diffuse(const Tensor<T>& z0, const Tensor<T>& eps, double alpha_bar);

template <typename T>
Tensor<T> forward_diffuse(const Tensor<T>& z0, std::size_t t, const Tensor<T>& eps, const NoiseSchedule& schedule);

// (z_t - sqrt(1 - alpha_bar) * eps) / sqrt(alpha_bar)
template <typename T>
Tensor<T> predict_z0(const Tensor<T>& z_t, const Tensor<T>& eps, double alpha_bar);

// Noise prediction for a batch at a common timestep.
template <typename T>
using EpsFn = std::function<Tensor<T>(const Tensor<T>& z_t, std::size_t t)>;

// Ancestral DDPM sampling from z_t at timestep t_start using |steps|
// respaced timesteps and posterior variance
//   (1 - alpha_bar_prev) / (1 - alpha_bar) * (1 - alpha_bar / alpha_bar_prev).
// The last step returns the predicted z0 without added noise.
template <typename T>
Tensor<T> ddpm_sample_from(const EpsFn<T>& eps, const NoiseSchedule& schedule, const Tensor<T>& z_t,
                           std::size_t t_start, std::size_t steps, Rng& rng);

// Starts from z_T ~ N(0, I) drawn from |seed|.
template <typename T>
Tensor<T> ddpm_sample(const EpsFn<T>& eps, const NoiseSchedule& schedule, const Shape& shape, std::size_t steps,
                      std::uint64_t seed);

struct DenoiserConfig {
  std::size_t latent_channels = 4;
  std::size_t base_width = 64;
  std::vector<std::size_t> width_mults{1, 2, 4, 4};  // one per scale
  std::size_t time_dim = 64;     // sinusoidal embedding size
  std::size_t map_classes = 4;
  float latent_scale = 1.0f;     // latents are multiplied by this before diffusion

  static DenoiserConfig paper();
  static DenoiserConfig desk();
  void validate() const;
  std::size_t scales() const { return width_mults.size(); }
  std::size_t width_at(std::size_t s) const { return base_width * width_mults.at(s); }
  // conv_in sees the noisy latent and the guidance latent.
  std::size_t input_channels() const { return 2 * latent_channels; }
};

// Map features f_ms, one per U-Net scale.
struct SamFeatures {
  std::vector<Tensor<float>> levels;
};

// Residual block with a per-channel timestep bias:
//   x + conv2(lrelu(conv1(lrelu(x)) + proj(temb)))
class TimeResBlock {
 public:
  TimeResBlock() = default;
  TimeResBlock(std::size_t channels, std::size_t temb_channels, Rng& rng);
  Tensor<float> operator()(const Tensor<float>& x, const Tensor<float>& temb) const;
  void collect(const std::string& prefix, ParamList<float>& out) const;

  Conv2d<float> conv1;
  Conv2d<float> conv2;
  Conv2d<float> proj;
};

// Four-scale U-Net predicting noise from concat(z_t, z_hat), with map
// features from the SAM branch added to the encoder features at each
// scale. The guidance input channels of conv_in and the SAM output convs
// start at zero.
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }
  DenoiserConfig& mutable_config() { return config_; }

  // Features for latents of size (h, w); map sizes must be h and w times a
  // common integer.
  SamFeatures sam_features(std::span<const MapRaster> maps, std::size_t h, std::size_t w) const;

  // z_t and z_hat are (N, latent_channels, h, w) in scaled units; |t| holds
  // one timestep per sample. |sam| may be null for no explicit guidance.
  // |encoder_features|, when given, receives f_enc at each scale.
  Tensor<float> predict_eps(const Tensor<float>& z_t, const Tensor<float>& z_hat, std::span<const std::size_t> t,
                            const SamFeatures* sam, std::vector<Tensor<float>>* encoder_features = nullptr) const;

  // unet.* and sam.*
  ParamList<float> params() const;

  std::vector<std::uint8_t> checkpoint_bytes() const;
  std::uint64_t hash() const;
  void save(const std::filesystem::path& path) const;
  static Denoiser from_checkpoint(std::span<const std::uint8_t> bytes);
  static Denoiser load(const std::filesystem::path& path);

 private:
  struct SamLevel {
    Conv2d<float> conv_in;
    ResBlock<float> block;
    Conv2d<float> conv_out;
  };

  Tensor<float> time_embedding(std::span<const std::size_t> t) const;

  DenoiserConfig config_;
  Conv2d<float> time1_, time2_;
  Conv2d<float> conv_in_;
  std::vector<TimeResBlock> enc_blocks_;
  std::vector<Conv2d<float>> downs_;
  TimeResBlock mid_;
  std::vector<Conv2d<float>> merges_;
  std::vector<TimeResBlock> dec_blocks_;
  std::vector<Conv2d<float>> ups_;
  Conv2d<float> conv_out_;
  std::vector<SamLevel> sam_;
};

// Guided sampling: z_hat (1, c, h, w) and the map condition the denoiser;
// returns the sampled latent in unscaled units. Throws ErrorCode::kNumeric
// naming the step if the sample stops being finite.
Tensor<float> guided_sample(const Denoiser& denoiser, const NoiseSchedule& schedule, const Tensor<float>& z_hat,
                            const MapRaster& map, std::size_t steps, std::uint64_t seed);

// One training example: the clean latent, the decoded symbols and the
// LCM reconstruction, all (1, c, h, w), plus the map.
struct DiffusionSample {
  Tensor<float> z0;
  Tensor<float> y_hat;
  Tensor<float> z_hat;
  MapRaster map;
};

struct DenoiserTrainOptions {
  std::size_t steps = 2000;
  std::size_t batch = 8;
  double lr = 2e-4;
  std::size_t warmup = 100;
  std::uint64_t seed = 0;
  bool calibrate_scale = true;  // set latent_scale to 1 / std(z0) first
};

// Minimizes ||eps - eps_theta(z_t, z_hat, f_ms, t)||^2 with t uniform on
// [0, T] per sample. With |finetune| set, z_hat is recomputed as
// finetune->gs(y_hat) on every step and gs is optimized jointly; all other
// LCM weights stay frozen.
TrainTrace train_denoiser(Denoiser& denoiser, std::span<const DiffusionSample> data, const NoiseSchedule& schedule,
                          const DenoiserTrainOptions& options, LcmModel* finetune = nullptr,
                          const StepCallback& on_step = {});

}  // namespace magc
