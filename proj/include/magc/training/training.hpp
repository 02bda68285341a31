#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "magc/autoencoder/autoencoder.hpp"
#include "magc/codec/lcm_model.hpp"
#include "magc/diffusion/diffusion.hpp"
#include "magc/io/dataset.hpp"
#include "magc/io/kv_config.hpp"

namespace magc {

// The rate-distortion weights used across the model grid, indexed by
// lambda_index.
inline constexpr double kLambdaGrid[] = {0.10, 0.20, 0.39, 0.67, 0.91, 1.25};

struct TrainConfig {
  double lambda = 0.39;
  std::uint8_t lambda_index = 2;
  double lr = 5e-5;
  std::size_t warmup = 10000;
  std::size_t batch = 16;
  std::size_t steps = 250000;
  std::uint64_t seed = 0;
  std::string preset = "paper";

  static TrainConfig paper();
  static TrainConfig desk();
  // Starts from the preset named by "preset" (default paper) and applies
  // the keys lambda, lambda_index, lr, warmup, batch, steps and seed.
  static TrainConfig from_kv(const KvConfig& kv);
  void validate() const;
};

// Stage-1 objective, per latent element: rate in bits, distortion as the
// mean squared latent error, total = rate + lambda * distortion.
struct RDLossBreakdown {
  double rate = 0.0;
  double distortion = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

// Per-image latents (1, c, h, w) and their maps.
struct LatentSet {
  std::vector<Tensor<float>> z0;
  std::vector<MapRaster> maps;
  std::size_t size() const { return z0.size(); }
};

LatentSet encode_dataset(const PixelAutoencoder& autoencoder, std::span<const Sample> samples);

struct LatentBatch {
  Tensor<float> z0;  // (B, c, h, w)
  std::vector<MapRaster> maps;
};

LatentBatch sample_batch(const LatentSet& set, std::size_t batch, Rng& rng);
// Items [begin, end) in order.
LatentBatch slice_batch(const LatentSet& set, std::size_t begin, std::size_t end);

// Training-mode forward pass: noise-relaxed rate for h and every slice,
// straight-through rounding on the synthesis path. Records on the tape
// when gradients are enabled; |total| receives the differentiable loss.
RDLossBreakdown stage1_loss(const LcmModel& model, const LatentBatch& batch, double lambda, Rng& rng,
                            Tensor<float>* total = nullptr);

// Evaluation-mode pass with hard rounding and the discrete rate estimate.
RDLossBreakdown evaluate_rd(const LcmModel& model, const LatentBatch& batch, double lambda);

// Decoded symbols and reconstruction as the codec produces them.
struct LcmReconstruction {
  Tensor<float> y_hat;
  Tensor<float> z_hat;
};
LcmReconstruction lcm_reconstruct(const LcmModel& model, const Tensor<float>& z0, std::span<const MapRaster> maps);

// One optimizer update per call, with LR = lr * min(1, step / warmup).
class Stage1Trainer {
 public:
  Stage1Trainer(LcmModel& model, const TrainConfig& config);
  // Throws ErrorCode::kNumeric, quoting the breakdown, on a non-finite loss.
  RDLossBreakdown step(const LatentBatch& batch);
  std::size_t steps_done() const { return step_; }
  double lr() const { return optimizer_.lr(); }

 private:
  LcmModel& model_;
  TrainConfig config_;
  AdamW<float> optimizer_;
  Rng rng_;
  std::size_t step_ = 0;
};

// Runs config.steps updates on random minibatches. When |csv| is given it
// receives "step,L_rate,L_ld,total,lr" and one row per step.
std::vector<RDLossBreakdown> train_stage1(LcmModel& model, const LatentSet& data, const TrainConfig& config,
                                          std::ostream* csv = nullptr, const StepCallback& on_step = {});

// Trailing moving average with the given window (shorter at the start).
std::vector<double> smoothed(std::span<const double> values, std::size_t window);

struct GridPoint {
  double lambda = 0.0;
  std::uint8_t lambda_index = 0;
  std::filesystem::path checkpoint;
  double bpp = 0.0;          // mean over held-out images
  double psnr = 0.0;         // pixel-decoder reconstruction, dB
  double latent_mse = 0.0;   // held-out latent distortion
};

// Trains one LCM per lambda (same seed and data order), saves
// lcm_<index>.mgw under out_dir and evaluates each on the held-out set.
std::vector<GridPoint> train_rd_grid(const PixelAutoencoder& autoencoder, std::span<const Sample> train,
                                     std::span<const Sample> heldout, std::span<const double> lambdas,
                                     std::span<const std::uint8_t> lambda_indices, const LcmConfig& lcm_config,
                                     const TrainConfig& config, const std::filesystem::path& out_dir);

// Builds stage-2 examples from frozen autoencoder latents and a frozen LCM.
std::vector<DiffusionSample> build_diffusion_set(const LcmModel& model, const LatentSet& latents);

}  // namespace magc
