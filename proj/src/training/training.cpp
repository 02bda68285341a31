#include "magc/training/training.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "magc/codec/codec.hpp"
#include "magc/error.hpp"
#include "magc/eval/evalkit.hpp"
#include "magc/tensor/tape.hpp"

namespace magc {
namespace {

struct ForwardResult {
  Tensor<float> rate_bits;
  Tensor<float> y_hat;
  Tensor<float> z_hat;
};

void check_batch(const LcmModel& model, const LatentBatch& batch) {
  check(batch.z0.defined() && batch.z0.rank() == 4 && batch.z0.dim(0) >= 1, "stage 1: empty batch");
  check(batch.z0.dim(1) == model.config().transform.latent_channels,
        "stage 1: latent has " + std::to_string(batch.z0.dim(1)) + " channels, the model expects " +
            std::to_string(model.config().transform.latent_channels));
  if (model.config().transform.use_map) {
    check(batch.maps.size() == batch.z0.dim(0), "stage 1: need one map per latent");
  }
}

std::string describe(const RDLossBreakdown& b) {
  std::ostringstream s;
  s << "L_rate=" << b.rate << " L_ld=" << b.distortion << " lambda=" << b.lambda << " total=" << b.total;
  return s.str();
}

}  // namespace

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.lr = 5e-4;
  c.warmup = 500;
  c.batch = 8;
  c.steps = 3000;
  c.preset = "desk";
  return c;
}

TrainConfig TrainConfig::from_kv(const KvConfig& kv) {
  const std::string preset = kv.get("preset", "paper");
  TrainConfig c;
  if (preset == "desk") {
    c = desk();
  } else if (preset == "paper") {
    c = paper();
  } else {
    fail(ErrorCode::kUsage, "train config: unknown preset '" + preset + "' (expected paper or desk)");
  }
  if (kv.has("lambda_index") && !kv.has("lambda")) {
    const long long i = kv.get_int("lambda_index", 0);
    check(i >= 0 && i < static_cast<long long>(std::size(kLambdaGrid)),
          "train config: lambda_index must be in [0, " + std::to_string(std::size(kLambdaGrid) - 1) + "]");
    c.lambda = kLambdaGrid[i];
  }
  c.lambda = kv.get_double("lambda", c.lambda);
  c.lambda_index = static_cast<std::uint8_t>(kv.get_int("lambda_index", c.lambda_index));
  c.lr = kv.get_double("lr", c.lr);
  c.warmup = static_cast<std::size_t>(kv.get_int("warmup", static_cast<long long>(c.warmup)));
  c.batch = static_cast<std::size_t>(kv.get_int("batch", static_cast<long long>(c.batch)));
  c.steps = static_cast<std::size_t>(kv.get_int("steps", static_cast<long long>(c.steps)));
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  check(std::isfinite(lambda) && lambda >= 0.0, "train config: lambda must be non-negative");
  check(std::isfinite(lr) && lr > 0.0, "train config: lr must be positive");
  check(batch >= 1 && steps >= 1, "train config: batch and steps must be positive");
  check(warmup <= steps, "train config: warmup (" + std::to_string(warmup) + ") exceeds total steps (" +
                             std::to_string(steps) + ")");
}

LatentSet encode_dataset(const PixelAutoencoder& autoencoder, std::span<const Sample> samples) {
  LatentSet set;
  for (const Sample& s : samples) {
    set.z0.push_back(autoencoder.encode_image(s.image));
    set.maps.push_back(s.map);
  }
  return set;
}

LatentBatch sample_batch(const LatentSet& set, std::size_t batch, Rng& rng) {
  check(set.size() > 0 && batch >= 1, "sample_batch: empty set or batch");
  std::vector<Tensor<float>> parts;
  LatentBatch out;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t i = rng.below(set.size());
    parts.push_back(set.z0[i]);
    out.maps.push_back(set.maps[i]);
  }
  out.z0 = concat<float>(std::span<const Tensor<float>>(parts), 0);
  return out;
}

LatentBatch slice_batch(const LatentSet& set, std::size_t begin, std::size_t end) {
  check(begin < end && end <= set.size(), "slice_batch: bad range");
  LatentBatch out;
  out.z0 = concat<float>(std::span<const Tensor<float>>(set.z0.data() + begin, end - begin), 0);
  out.maps.assign(set.maps.begin() + static_cast<std::ptrdiff_t>(begin),
                  set.maps.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

RDLossBreakdown stage1_loss(const LcmModel& model, const LatentBatch& batch, double lambda, Rng& rng,
                            Tensor<float>* total) {
  check_batch(model, batch);
  const Tensor<float>& z0 = batch.z0;
  const std::size_t n = z0.dim(0), h = z0.dim(2), w = z0.dim(3);
  const auto sem = model.semantic(batch.maps, h, w);
  const Tensor<float> y = model.ga(z0, sem, Phase::kTrain);
  const Tensor<float> hy = model.ha(y);
  Tensor<float> bits = estimate_rate_noise(hy, model.fp.field(n, hy.dim(2), hy.dim(3)), rng);
  const Tensor<float> gc = model.hs(ste_round(hy));
  const SliceLayout& layout = model.cm.layout();
  std::vector<Tensor<float>> decoded;
  for (std::size_t i = 0; i < layout.slices(); ++i) {
    const Tensor<float> yi = slice_channels(y, layout.begin(i), layout.end(i));
    const auto field = model.cm.predict(gc, decoded, i);
    bits = add(bits, estimate_rate_noise(yi, field, rng));
    decoded.push_back(ste_round(yi));
  }
  const Tensor<float> z_hat = model.gs(concat<float>(std::span<const Tensor<float>>(decoded), 1), sem, Phase::kTrain);
  const Tensor<float> rate = scale(bits, 1.0f / static_cast<float>(z0.numel()));
  const Tensor<float> distortion = mse(z_hat, z0);
  RDLossBreakdown out;
  out.lambda = lambda;
  out.rate = rate.item();
  out.distortion = distortion.item();
  out.total = out.rate + lambda * out.distortion;
  if (total) *total = add(rate, scale(distortion, static_cast<float>(lambda)));
  return out;
}

LcmReconstruction lcm_reconstruct(const LcmModel& model, const Tensor<float>& z0, std::span<const MapRaster> maps) {
  NoGradGuard guard;
  const auto sem = model.semantic(maps, z0.dim(2), z0.dim(3));
  const Tensor<float> y = model.ga(z0, sem, Phase::kEval);
  LcmReconstruction out;
  out.y_hat = ste_round(y);
  out.z_hat = model.gs(out.y_hat, sem, Phase::kEval);
  return out;
}

RDLossBreakdown evaluate_rd(const LcmModel& model, const LatentBatch& batch, double lambda) {
  check_batch(model, batch);
  NoGradGuard guard;
  const Tensor<float>& z0 = batch.z0;
  const std::size_t n = z0.dim(0), h = z0.dim(2), w = z0.dim(3);
  const auto sem = model.semantic(batch.maps, h, w);
  const Tensor<float> y = model.ga(z0, sem, Phase::kEval);
  const Tensor<float> h_hat = ste_round(model.ha(y));
  double bits = estimate_rate_discrete(h_hat, model.fp.field(n, h_hat.dim(2), h_hat.dim(3))).bits;
  const Tensor<float> gc = model.hs(h_hat);
  const SliceLayout& layout = model.cm.layout();
  std::vector<Tensor<float>> decoded;
  for (std::size_t i = 0; i < layout.slices(); ++i) {
    const Tensor<float> yi = ste_round(slice_channels(y, layout.begin(i), layout.end(i)));
    bits += estimate_rate_discrete(yi, model.cm.predict(gc, decoded, i)).bits;
    decoded.push_back(yi);
  }
  const Tensor<float> z_hat = model.gs(concat<float>(std::span<const Tensor<float>>(decoded), 1), sem, Phase::kEval);
  RDLossBreakdown out;
  out.lambda = lambda;
  out.rate = bits / double(z0.numel());
  out.distortion = mse(z_hat, z0).item();
  out.total = out.rate + lambda * out.distortion;
  return out;
}

Stage1Trainer::Stage1Trainer(LcmModel& model, const TrainConfig& config)
    : model_(model), config_(config), optimizer_(model.params(), AdamConfig{.lr = config.lr}), rng_(config.seed) {
  config_.validate();
}

RDLossBreakdown Stage1Trainer::step(const LatentBatch& batch) {
  ++step_;
  optimizer_.set_lr(warmup_lr(config_.lr, step_, config_.warmup));
  RDLossBreakdown b;
  try {
    Tensor<float> total;
    b = stage1_loss(model_, batch, config_.lambda, rng_, &total);
    if (!std::isfinite(b.total)) fail(ErrorCode::kNumeric, "non-finite loss");
    optimizer_.zero_grad();
    backward(total);
    optimizer_.step();
  } catch (const Error& e) {
    tape<float>().clear();
    rethrow_with_stage(e, "stage 1 step " + std::to_string(step_) + " (" + describe(b) + ")");
  }
  return b;
}

std::vector<RDLossBreakdown> train_stage1(LcmModel& model, const LatentSet& data, const TrainConfig& config,
                                          std::ostream* csv, const StepCallback& on_step) {
  check(data.size() > 0, "train_stage1: no training latents");
  Stage1Trainer trainer(model, config);
  Rng batch_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<RDLossBreakdown> log;
  if (csv) *csv << "step,L_rate,L_ld,total,lr\n";
  char row[160];
  for (std::size_t s = 1; s <= config.steps; ++s) {
    const RDLossBreakdown b = trainer.step(sample_batch(data, config.batch, batch_rng));
    log.push_back(b);
    if (csv) {
      std::snprintf(row, sizeof row, "%zu,%.9g,%.9g,%.9g,%.9g\n", s, b.rate, b.distortion, b.total, trainer.lr());
      *csv << row;
    }
    if (on_step) on_step(s, b.total);
  }
  return log;
}

std::vector<double> smoothed(std::span<const double> values, std::size_t window) {
  check(window >= 1, "smoothed: window must be positive");
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out[i] = sum / double(std::min(i + 1, window));
  }
  return out;
}

std::vector<GridPoint> train_rd_grid(const PixelAutoencoder& autoencoder, std::span<const Sample> train,
                                     std::span<const Sample> heldout, std::span<const double> lambdas,
                                     std::span<const std::uint8_t> lambda_indices, const LcmConfig& lcm_config,
                                     const TrainConfig& config, const std::filesystem::path& out_dir) {
  check(lambdas.size() >= 2, "train_rd_grid: need at least 2 lambda values");
  check(lambda_indices.size() == lambdas.size(), "train_rd_grid: one lambda index per lambda");
  check(!heldout.empty(), "train_rd_grid: empty held-out set");
  const LatentSet train_set = encode_dataset(autoencoder, train);
  const LatentSet held_set = encode_dataset(autoencoder, heldout);
  std::filesystem::create_directories(out_dir);
  std::vector<GridPoint> points;
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    LcmConfig lc = lcm_config;
    lc.lambda = lambdas[k];
    lc.lambda_index = lambda_indices[k];
    TrainConfig tc = config;
    tc.lambda = lambdas[k];
    tc.lambda_index = lambda_indices[k];
    LcmModel model(lc, config.seed);
    train_stage1(model, train_set, tc);
    GridPoint p;
    p.lambda = lambdas[k];
    p.lambda_index = lambda_indices[k];
    p.checkpoint = out_dir / ("lcm_" + std::to_string(lambda_indices[k]) + ".mgw");
    model.save(p.checkpoint);
    for (std::size_t i = 0; i < heldout.size(); ++i) {
      const Sample& s = heldout[i];
      const CompressResult r = compress(model, held_set.z0[i], s.map, static_cast<std::uint32_t>(s.image.width),
                                        static_cast<std::uint32_t>(s.image.height));
      p.bpp += r.report.bpp;
      p.psnr += psnr(autoencoder.decode_latent(r.z_hat), s.image);
      NoGradGuard guard;
      p.latent_mse += mse(r.z_hat, held_set.z0[i]).item();
    }
    const double n = double(heldout.size());
    p.bpp /= n;
    p.psnr /= n;
    p.latent_mse /= n;
    points.push_back(p);
  }
  return points;
}

std::vector<DiffusionSample> build_diffusion_set(const LcmModel& model, const LatentSet& latents) {
  std::vector<DiffusionSample> out;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    const LcmReconstruction r =
        lcm_reconstruct(model, latents.z0[i], std::span<const MapRaster>(&latents.maps[i], 1));
    out.push_back({latents.z0[i], r.y_hat, r.z_hat, latents.maps[i]});
  }
  return out;
}

}  // namespace magc
