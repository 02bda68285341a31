#include "magc/diffusion/diffusion.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "magc/error.hpp"
#include "magc/io/bytes.hpp"
#include "magc/tensor/tape.hpp"

namespace magc {
namespace {

constexpr const char* kMetaName = "meta.unet";
constexpr std::size_t kMetaFixed = 6;

void require_alpha_bar(double alpha_bar, const char* where) {
  check(alpha_bar > 0.0 && alpha_bar <= 1.0, std::string(where) + ": alpha_bar must be in (0, 1]");
}

std::size_t as_count(float v, const char* what) {
  check(v >= 1.0f && v < 65536.0f && std::floor(v) == v, std::string("checkpoint: bad ") + what, ErrorCode::kFormat);
  return static_cast<std::size_t>(v);
}

Tensor<float> stack(const std::vector<Tensor<float>>& parts) {
  return concat<float>(std::span<const Tensor<float>>(parts), 0);
}

}  // namespace

NoiseSchedule NoiseSchedule::linear(std::size_t T, double beta_start, double beta_end) {
  check(T >= 1, "noise schedule: T must be at least 1");
  std::vector<double> betas(T + 1);
  for (std::size_t t = 0; t <= T; ++t) betas[t] = beta_start + (beta_end - beta_start) * double(t) / double(T);
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  check(!betas_.empty(), "noise schedule: no betas");
  double prod = 1.0;
  for (double b : betas_) {
    check(b > 0.0 && b < 1.0, "noise schedule: every beta must lie in (0, 1)");
    prod *= 1.0 - b;
    alpha_bar_.push_back(prod);
  }
}

std::vector<std::size_t> NoiseSchedule::respaced(std::size_t t_start, std::size_t steps) const {
  check(t_start <= T(), "respaced: start timestep " + std::to_string(t_start) + " exceeds T=" + std::to_string(T()));
  check(steps >= 1 && steps <= std::max<std::size_t>(1, t_start),
        "respaced: step count must be in [1, " + std::to_string(std::max<std::size_t>(1, t_start)) + "]");
  std::vector<std::size_t> out;
  for (std::size_t k = steps; k >= 1; --k) {
    out.push_back(static_cast<std::size_t>(std::llround(double(t_start) * double(k) / double(steps))));
  }
  return out;
}

template <typename T>
Tensor<T> diffuse(const Tensor<T>& z0, const Tensor<T>& eps, double alpha_bar) {
  check(z0.shape() == eps.shape(),
        "diffuse: noise " + shape_str(eps.shape()) + " does not match latent " + shape_str(z0.shape()));
  check(alpha_bar >= 0.0 && alpha_bar <= 1.0, "diffuse: alpha_bar must be in [0, 1]");
  const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
  Tensor<T> out(z0.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.mutable_ptr()[i] = static_cast<T>(a * double(z0.ptr()[i]) + b * double(eps.ptr()[i]));
  return out;
}

template <typename T>
Tensor<T> forward_diffuse(const Tensor<T>& z0, std::size_t t, const Tensor<T>& eps, const NoiseSchedule& schedule) {
  check(t <= schedule.T(), "forward_diffuse: timestep " + std::to_string(t) + " outside [0, " +
                               std::to_string(schedule.T()) + "]");
  return diffuse(z0, eps, schedule.alpha_bar(t));
}

template <typename T>
Tensor<T> predict_z0(const Tensor<T>& z_t, const Tensor<T>& eps, double alpha_bar) {
  check(z_t.shape() == eps.shape(), "predict_z0: shape mismatch");
  require_alpha_bar(alpha_bar, "predict_z0");
  const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
  Tensor<T> out(z_t.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.mutable_ptr()[i] = static_cast<T>((double(z_t.ptr()[i]) - b * double(eps.ptr()[i])) / a);
  return out;
}

template <typename T>
Tensor<T> ddpm_sample_from(const EpsFn<T>& eps, const NoiseSchedule& schedule, const Tensor<T>& z_t,
                           std::size_t t_start, std::size_t steps, Rng& rng) {
  const std::vector<std::size_t> ts = schedule.respaced(t_start, steps);
  Tensor<T> z = z_t.detach();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double ab = schedule.alpha_bar(ts[i]);
    const bool last = i + 1 == ts.size();
    const double ab_prev = last ? 1.0 : schedule.alpha_bar(ts[i + 1]);
    const Tensor<T> eps_hat = eps(z, ts[i]);
    check(eps_hat.shape() == z.shape(), "ddpm_sample: noise prediction has shape " + shape_str(eps_hat.shape()));
    const Tensor<T> x0 = predict_z0(z, eps_hat, ab);
    Tensor<T> next = x0;
    if (!last) {
      const double beta = 1.0 - ab / ab_prev;
      const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
      const double ct = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
      const double sd = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * beta);
      next = Tensor<T>(z.shape());
      for (std::size_t j = 0; j < z.numel(); ++j) {
        next.mutable_ptr()[j] =
            static_cast<T>(c0 * double(x0.ptr()[j]) + ct * double(z.ptr()[j]) + sd * rng.normal());
      }
    }
    for (T v : next.data()) {
      if (!std::isfinite(static_cast<double>(v))) {
        fail(ErrorCode::kNumeric, "ddpm_sample: non-finite latent at step " + std::to_string(i + 1) + " of " +
                                      std::to_string(ts.size()) + " (t=" + std::to_string(ts[i]) + ")");
      }
    }
    z = next;
  }
  return z;
}

template <typename T>
Tensor<T> ddpm_sample(const EpsFn<T>& eps, const NoiseSchedule& schedule, const Shape& shape, std::size_t steps,
                      std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> z(shape);
  for (T& v : z.mutable_data()) v = static_cast<T>(rng.normal());
  return ddpm_sample_from(eps, schedule, z, schedule.T(), steps, rng);
}

#define MAGC_INSTANTIATE_DIFFUSION(T)                                                                      \
  template Tensor<T> diffuse(const Tensor<T>&, const Tensor<T>&, double);                                 \
  template Tensor<T> forward_diffuse(const Tensor<T>&, std::size_t, const Tensor<T>&, const NoiseSchedule&); \
  template Tensor<T> predict_z0(const Tensor<T>&, const Tensor<T>&, double);                              \
  template Tensor<T> ddpm_sample_from(const EpsFn<T>&, const NoiseSchedule&, const Tensor<T>&, std::size_t,  \
                                      std::size_t, Rng&);                                                 \
  template Tensor<T> ddpm_sample(const EpsFn<T>&, const NoiseSchedule&, const Shape&, std::size_t, std::uint64_t);

MAGC_INSTANTIATE_DIFFUSION(float)
MAGC_INSTANTIATE_DIFFUSION(double)
#undef MAGC_INSTANTIATE_DIFFUSION

DenoiserConfig DenoiserConfig::paper() { return DenoiserConfig{}; }

DenoiserConfig DenoiserConfig::desk() {
  DenoiserConfig c;
  c.base_width = 16;
  c.width_mults = {1, 2, 2, 2};
  c.time_dim = 32;
  return c;
}

void DenoiserConfig::validate() const {
  check(latent_channels >= 1 && base_width >= 1 && time_dim >= 2 && time_dim % 2 == 0,
        "denoiser config: channels must be positive and time_dim even");
  check(width_mults.size() == 4, "denoiser config: the U-Net has exactly 4 scales");
  for (std::size_t m : width_mults) check(m >= 1, "denoiser config: width multipliers must be positive");
  check(map_classes >= 1, "denoiser config: map_classes must be positive");
  check(std::isfinite(latent_scale) && latent_scale > 0.0f, "denoiser config: latent_scale must be positive");
}

TimeResBlock::TimeResBlock(std::size_t channels, std::size_t temb_channels, Rng& rng)
    : conv1(channels, channels, 3, 1, rng), conv2(channels, channels, 3, 1, rng), proj(temb_channels, channels, 1, 1, rng) {}

Tensor<float> TimeResBlock::operator()(const Tensor<float>& x, const Tensor<float>& temb) const {
  const Tensor<float> h = add_channel(conv1(lrelu(x)), proj(lrelu(temb)));
  return add(x, conv2(lrelu(h)));
}

void TimeResBlock::collect(const std::string& prefix, ParamList<float>& out) const {
  conv1.collect(prefix + ".conv1", out);
  conv2.collect(prefix + ".conv2", out);
  proj.collect(prefix + ".proj", out);
}

Denoiser::Denoiser(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t S = config_.scales();
  const std::size_t temb = 4 * config_.base_width;
  time1_ = Conv2d<float>(config_.time_dim, temb, 1, 1, rng);
  time2_ = Conv2d<float>(temb, temb, 1, 1, rng);
  conv_in_ = Conv2d<float>(config_.input_channels(), config_.width_at(0), 3, 1, rng);
  {
    Tensor<float>& w = conv_in_.weight;
    const std::size_t in = w.dim(1), kk = w.dim(2) * w.dim(3);
    for (std::size_t o = 0; o < w.dim(0); ++o)
      for (std::size_t c = config_.latent_channels; c < in; ++c)
        for (std::size_t k = 0; k < kk; ++k) w.mutable_ptr()[(o * in + c) * kk + k] = 0.0f;
  }
  for (std::size_t s = 0; s < S; ++s) {
    enc_blocks_.emplace_back(config_.width_at(s), temb, rng);
    if (s + 1 < S) downs_.emplace_back(config_.width_at(s), config_.width_at(s + 1), 3, 2, rng);
  }
  mid_ = TimeResBlock(config_.width_at(S - 1), temb, rng);
  merges_.resize(S);
  dec_blocks_.resize(S);
  ups_.resize(S);
  for (std::size_t s = S; s-- > 0;) {
    merges_[s] = Conv2d<float>(2 * config_.width_at(s), config_.width_at(s), 3, 1, rng);
    dec_blocks_[s] = TimeResBlock(config_.width_at(s), temb, rng);
    if (s > 0) ups_[s] = Conv2d<float>(config_.width_at(s), 4 * config_.width_at(s - 1), 3, 1, rng);
  }
  conv_out_ = Conv2d<float>(config_.width_at(0), config_.latent_channels, 3, 1, rng);
  conv_out_.zero();
  for (std::size_t s = 0; s < S; ++s) {
    SamLevel level{Conv2d<float>(config_.map_classes, config_.width_at(s), 3, 1, rng),
                   ResBlock<float>(config_.width_at(s), rng),
                   Conv2d<float>(config_.width_at(s), config_.width_at(s), 3, 1, rng)};
    level.conv_out.zero();
    sam_.push_back(std::move(level));
  }
}

SamFeatures Denoiser::sam_features(std::span<const MapRaster> maps, std::size_t h, std::size_t w) const {
  check(!maps.empty(), "sam_features: no maps given");
  const MapRaster& m = maps.front();
  check(m.num_classes == config_.map_classes, "sam_features: map has " + std::to_string(m.num_classes) +
                                                  " classes, the denoiser expects " +
                                                  std::to_string(config_.map_classes));
  check(h > 0 && w > 0 && m.height % h == 0 && m.width % w == 0 && m.height / h == m.width / w,
        "sam_features: map " + std::to_string(m.width) + "x" + std::to_string(m.height) +
            " is not a whole multiple of the latent " + std::to_string(w) + "x" + std::to_string(h));
  const std::size_t factor = m.height / h;
  const std::size_t reach = std::size_t{1} << (config_.scales() - 1);
  check(h % reach == 0 && w % reach == 0,
        "sam_features: latent size must be divisible by " + std::to_string(reach));
  const Tensor<float> onehot = one_hot<float>(maps);
  SamFeatures out;
  for (std::size_t s = 0; s < config_.scales(); ++s) {
    const SamLevel& l = sam_[s];
    const Tensor<float> pooled = avg_downsample(onehot, factor << s);
    out.levels.push_back(l.conv_out(l.block(lrelu(l.conv_in(pooled)))));
  }
  return out;
}

Tensor<float> Denoiser::time_embedding(std::span<const std::size_t> t) const {
  const std::size_t half = config_.time_dim / 2;
  Tensor<float> e(Shape{t.size(), config_.time_dim, 1, 1});
  for (std::size_t n = 0; n < t.size(); ++n) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
      e.mutable_ptr()[n * config_.time_dim + i] = static_cast<float>(std::sin(double(t[n]) * freq));
      e.mutable_ptr()[n * config_.time_dim + half + i] = static_cast<float>(std::cos(double(t[n]) * freq));
    }
  }
  return time2_(lrelu(time1_(e)));
}

Tensor<float> Denoiser::predict_eps(const Tensor<float>& z_t, const Tensor<float>& z_hat,
                                    std::span<const std::size_t> t, const SamFeatures* sam,
                                    std::vector<Tensor<float>>* encoder_features) const {
  check(z_t.rank() == 4 && z_t.dim(1) == config_.latent_channels,
        "denoiser: expected (N, " + std::to_string(config_.latent_channels) + ", h, w), got " + shape_str(z_t.shape()));
  check(z_hat.shape() == z_t.shape(), "denoiser: guidance latent " + shape_str(z_hat.shape()) +
                                          " does not match " + shape_str(z_t.shape()));
  check(t.size() == z_t.dim(0), "denoiser: need one timestep per sample");
  const std::size_t S = config_.scales();
  const std::size_t reach = std::size_t{1} << (S - 1);
  check(z_t.dim(2) % reach == 0 && z_t.dim(3) % reach == 0,
        "denoiser: latent size must be divisible by " + std::to_string(reach));
  if (sam) check(sam->levels.size() == S, "denoiser: SAM features need one level per scale");

  const Tensor<float> temb = time_embedding(t);
  Tensor<float> h = conv_in_(concat({z_t, z_hat}, 1));
  std::vector<Tensor<float>> skips;
  for (std::size_t s = 0; s < S; ++s) {
    h = enc_blocks_[s](h, temb);
    if (sam) {
      check(sam->levels[s].shape() == h.shape(), "denoiser: SAM feature " + shape_str(sam->levels[s].shape()) +
                                                     " does not match encoder feature " + shape_str(h.shape()));
      h = add(h, sam->levels[s]);
    }
    if (encoder_features) encoder_features->push_back(h);
    skips.push_back(h);
    if (s + 1 < S) h = downs_[s](lrelu(h));
  }
  h = mid_(h, temb);
  for (std::size_t s = S; s-- > 0;) {
    h = dec_blocks_[s](merges_[s](concat({h, skips[s]}, 1)), temb);
    if (s > 0) h = pixel_shuffle(ups_[s](lrelu(h)), 2);
  }
  return conv_out_(lrelu(h));
}

ParamList<float> Denoiser::params() const {
  ParamList<float> out;
  time1_.collect("unet.time1", out);
  time2_.collect("unet.time2", out);
  conv_in_.collect("unet.conv_in", out);
  for (std::size_t s = 0; s < config_.scales(); ++s) {
    enc_blocks_[s].collect("unet.enc" + std::to_string(s), out);
    if (s + 1 < config_.scales()) downs_[s].collect("unet.down" + std::to_string(s), out);
  }
  mid_.collect("unet.mid", out);
  for (std::size_t s = 0; s < config_.scales(); ++s) {
    merges_[s].collect("unet.merge" + std::to_string(s), out);
    dec_blocks_[s].collect("unet.dec" + std::to_string(s), out);
    if (s > 0) ups_[s].collect("unet.up" + std::to_string(s), out);
  }
  conv_out_.collect("unet.conv_out", out);
  for (std::size_t s = 0; s < config_.scales(); ++s) {
    const std::string p = "sam.scale" + std::to_string(s);
    sam_[s].conv_in.collect(p + ".conv_in", out);
    sam_[s].block.collect(p + ".block", out);
    sam_[s].conv_out.collect(p + ".conv_out", out);
  }
  return out;
}

std::vector<std::uint8_t> Denoiser::checkpoint_bytes() const {
  CheckpointEntry meta{kMetaName, {}, {}};
  meta.values = {float(config_.latent_channels), float(config_.base_width), float(config_.time_dim),
                 float(config_.map_classes),     config_.latent_scale,      float(config_.scales())};
  for (std::size_t m : config_.width_mults) meta.values.push_back(float(m));
  meta.shape = {meta.values.size()};
  std::vector<CheckpointEntry> entries{std::move(meta)};
  for (auto& e : to_entries(params())) entries.push_back(std::move(e));
  return serialize_checkpoint(entries);
}

std::uint64_t Denoiser::hash() const { return fnv1a64(checkpoint_bytes()); }

void Denoiser::save(const std::filesystem::path& path) const { write_file(path, checkpoint_bytes()); }

Denoiser Denoiser::from_checkpoint(std::span<const std::uint8_t> bytes) {
  const auto entries = parse_checkpoint(bytes);
  const CheckpointEntry* meta = nullptr;
  for (const auto& e : entries)
    if (e.name == kMetaName) meta = &e;
  if (!meta) fail(ErrorCode::kModelMismatch, "checkpoint is not a denoiser (no meta.unet record)");
  const auto& v = meta->values;
  check(v.size() >= kMetaFixed && v.size() == kMetaFixed + as_count(v[5], "scale count"),
        "checkpoint: malformed meta.unet record", ErrorCode::kFormat);
  DenoiserConfig c;
  c.latent_channels = as_count(v[0], "latent_channels");
  c.base_width = as_count(v[1], "base_width");
  c.time_dim = as_count(v[2], "time_dim");
  c.map_classes = as_count(v[3], "map_classes");
  c.latent_scale = v[4];
  c.width_mults.clear();
  for (std::size_t i = kMetaFixed; i < v.size(); ++i) c.width_mults.push_back(as_count(v[i], "width multiplier"));
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kFormat, std::string("checkpoint: ") + e.what());
  }
  Denoiser model(c, 0);
  auto params = model.params();
  load_entries(params, entries);
  return model;
}

Denoiser Denoiser::load(const std::filesystem::path& path) {
  try {
    return from_checkpoint(read_file(path));
  } catch (const Error& e) {
    rethrow_with_stage(e, path.string());
  }
}

Tensor<float> guided_sample(const Denoiser& denoiser, const NoiseSchedule& schedule, const Tensor<float>& z_hat,
                            const MapRaster& map, std::size_t steps, std::uint64_t seed) {
  NoGradGuard guard;
  check(z_hat.rank() == 4 && z_hat.dim(0) == 1, "guided_sample: expected a single (1, c, h, w) latent");
  const float ls = denoiser.config().latent_scale;
  const Tensor<float> guide = scale(z_hat, ls);
  const SamFeatures sam = denoiser.sam_features(std::span<const MapRaster>(&map, 1), z_hat.dim(2), z_hat.dim(3));
  const EpsFn<float> eps = [&](const Tensor<float>& z, std::size_t t) {
    const std::size_t ts[1] = {t};
    return denoiser.predict_eps(z, guide, ts, &sam);
  };
  return scale(ddpm_sample(eps, schedule, z_hat.shape(), steps, seed), 1.0f / ls);
}

TrainTrace train_denoiser(Denoiser& denoiser, std::span<const DiffusionSample> data, const NoiseSchedule& schedule,
                          const DenoiserTrainOptions& options, LcmModel* finetune, const StepCallback& on_step) {
  check(!data.empty(), "train_denoiser: no training samples");
  check(options.batch >= 1 && options.steps >= 1, "train_denoiser: batch and steps must be positive");
  const Shape& shape = data.front().z0.shape();
  check(shape.size() == 4 && shape[0] == 1, "train_denoiser: samples must be (1, c, h, w)");
  for (const DiffusionSample& d : data) {
    check(d.z0.shape() == shape && d.z_hat.shape() == shape, "train_denoiser: samples differ in shape");
    if (finetune) check(d.y_hat.defined(), "train_denoiser: fine-tuning needs y_hat for every sample");
  }
  if (options.calibrate_scale) {
    double sum = 0, sq = 0, n = 0;
    for (const DiffusionSample& d : data) {
      for (float v : d.z0.data()) {
        sum += v;
        sq += double(v) * v;
        n += 1;
      }
    }
    const double var = sq / n - (sum / n) * (sum / n);
    if (var > 0) denoiser.mutable_config().latent_scale = static_cast<float>(1.0 / std::sqrt(var));
  }
  const float ls = denoiser.config().latent_scale;
  const std::size_t h = shape[2], w = shape[3];

  ParamList<float> params = denoiser.params();
  if (finetune) finetune->gs.collect("gs", params);
  AdamW<float> opt(params, AdamConfig{.lr = options.lr});
  Rng rng(options.seed);
  TrainTrace trace;
  for (std::size_t step = 1; step <= options.steps; ++step) {
    std::vector<Tensor<float>> z0s, zhs, yhs;
    std::vector<MapRaster> maps;
    std::vector<std::size_t> ts;
    for (std::size_t b = 0; b < options.batch; ++b) {
      const DiffusionSample& d = data[rng.below(data.size())];
      z0s.push_back(d.z0);
      zhs.push_back(d.z_hat);
      if (finetune) yhs.push_back(d.y_hat);
      maps.push_back(d.map);
      ts.push_back(static_cast<std::size_t>(rng.below(schedule.T() + 1)));
    }
    const Tensor<float> z0 = scale(stack(z0s), ls);
    Tensor<float> eps(z0.shape());
    for (float& v : eps.mutable_data()) v = static_cast<float>(rng.normal());
    Tensor<float> z_t(z0.shape());
    const std::size_t per = z0.numel() / options.batch;
    for (std::size_t b = 0; b < options.batch; ++b) {
      const double ab = schedule.alpha_bar(ts[b]);
      const double a = std::sqrt(ab), c = std::sqrt(1.0 - ab);
      for (std::size_t i = b * per; i < (b + 1) * per; ++i)
        z_t.mutable_ptr()[i] = static_cast<float>(a * z0.ptr()[i] + c * eps.ptr()[i]);
    }
    double value = 0;
    try {
      Tensor<float> guide;
      if (finetune) {
        std::vector<Tensor<float>> sem;
        {
          NoGradGuard guard;
          sem = finetune->semantic(maps, h, w);
        }
        guide = scale(finetune->gs(stack(yhs), sem, Phase::kTrain), ls);
      } else {
        guide = scale(stack(zhs), ls);
      }
      const SamFeatures sam = denoiser.sam_features(maps, h, w);
      const Tensor<float> loss = mse(denoiser.predict_eps(z_t, guide, ts, &sam), eps);
      value = loss.item();
      opt.zero_grad();
      backward(loss);
    } catch (const Error& e) {
      tape<float>().clear();
      std::ostringstream msg;
      msg << "train_denoiser: step " << step << " failed; recent losses:";
      const std::size_t from = trace.loss.size() > 10 ? trace.loss.size() - 10 : 0;
      for (std::size_t i = from; i < trace.loss.size(); ++i) msg << ' ' << trace.loss[i];
      rethrow_with_stage(e, msg.str());
    }
    opt.set_lr(warmup_lr(options.lr, step, options.warmup));
    opt.step();
    trace.loss.push_back(value);
    if (on_step) on_step(step, value);
  }
  return trace;
}

}  // namespace magc
