#include "magc/autoencoder/autoencoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "magc/error.hpp"
#include "magc/io/bytes.hpp"
#include "magc/tensor/adam.hpp"
#include "magc/tensor/tape.hpp"

namespace magc {
namespace {

constexpr const char* kMetaName = "meta.vae";
constexpr std::size_t kMetaFields = 4;

std::size_t as_count(float v, const char* what) {
  check(v >= 1.0f && v < 65536.0f && std::floor(v) == v, std::string("checkpoint: bad ") + what, ErrorCode::kFormat);
  return static_cast<std::size_t>(v);
}

}  // namespace

AutoencoderConfig AutoencoderConfig::paper() { return AutoencoderConfig{}; }

AutoencoderConfig AutoencoderConfig::desk() {
  AutoencoderConfig c;
  c.factor = 4;
  c.base_width = 16;
  c.max_width = 32;
  return c;
}

void AutoencoderConfig::validate() const {
  check(factor >= 2 && std::has_single_bit(factor), "autoencoder config: factor must be a power of two >= 2");
  check(latent_channels >= 1, "autoencoder config: latent channels must be positive");
  check(base_width >= 1 && max_width >= base_width, "autoencoder config: widths must be positive and ordered");
}

std::size_t AutoencoderConfig::levels() const { return static_cast<std::size_t>(std::countr_zero(factor)); }

std::size_t AutoencoderConfig::width_at(std::size_t level) const {
  return std::min(max_width, base_width << std::min<std::size_t>(level, 16));
}

PixelAutoencoder::PixelAutoencoder(const AutoencoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t L = config_.levels();
  enc_in_ = Conv2d<float>(3, config_.width_at(0), 3, 1, rng);
  for (std::size_t l = 0; l < L; ++l) {
    enc_down_.emplace_back(config_.width_at(l), config_.width_at(l + 1), 3, 2, rng);
    enc_blocks_.emplace_back(config_.width_at(l + 1), rng);
  }
  enc_out_ = Conv2d<float>(config_.width_at(L), config_.latent_channels, 3, 1, rng);
  latent_gain_ = Tensor<float>::scalar(1.0f);

  dec_in_ = Conv2d<float>(config_.latent_channels, config_.width_at(L), 3, 1, rng);
  for (std::size_t l = L; l-- > 0;) {
    dec_blocks_.emplace_back(config_.width_at(l + 1), rng);
    dec_up_.emplace_back(config_.width_at(l + 1), 4 * config_.width_at(l), 3, 1, rng);
  }
  dec_out_ = Conv2d<float>(config_.width_at(0), 3, 3, 1, rng);
  std::fill(dec_out_.bias.mutable_data().begin(), dec_out_.bias.mutable_data().end(), 0.5f);
}

Tensor<float> PixelAutoencoder::encode(const Tensor<float>& x) const {
  check(x.rank() == 4 && x.dim(1) == 3, "encode: expected an (N, 3, H, W) image batch, got " + shape_str(x.shape()));
  check(x.dim(2) % config_.factor == 0 && x.dim(3) % config_.factor == 0,
        "encode: image size " + std::to_string(x.dim(3)) + "x" + std::to_string(x.dim(2)) +
            " is not divisible by " + std::to_string(config_.factor));
  Tensor<float> h = lrelu(enc_in_(x));
  for (std::size_t l = 0; l < enc_down_.size(); ++l) h = enc_blocks_[l](lrelu(enc_down_[l](h)));
  return scale(enc_out_(lrelu(h)), latent_gain());
}

Tensor<float> PixelAutoencoder::decode(const Tensor<float>& z) const {
  check(z.rank() == 4 && z.dim(1) == config_.latent_channels,
        "decode: expected an (N, " + std::to_string(config_.latent_channels) + ", h, w) latent, got " +
            shape_str(z.shape()));
  Tensor<float> h = dec_in_(scale(z, 1.0f / latent_gain()));
  for (std::size_t i = 0; i < dec_up_.size(); ++i) h = lrelu(pixel_shuffle(dec_up_[i](dec_blocks_[i](h)), 2));
  return dec_out_(h);
}

Tensor<float> PixelAutoencoder::encode_image(const Image& image) const {
  NoGradGuard guard;
  return encode(images_to_tensor(std::span<const Image>(&image, 1)));
}

Image PixelAutoencoder::decode_latent(const Tensor<float>& z, std::size_t n) const {
  NoGradGuard guard;
  return tensor_to_image(decode(z), n);
}

void PixelAutoencoder::set_latent_gain(float gain) {
  check(std::isfinite(gain) && gain > 0.0f, "autoencoder: latent gain must be positive and finite");
  latent_gain_.mutable_data()[0] = gain;
}

ParamList<float> PixelAutoencoder::params() const {
  ParamList<float> out;
  enc_in_.collect("vae.enc.conv_in", out);
  for (std::size_t l = 0; l < enc_down_.size(); ++l) {
    enc_down_[l].collect("vae.enc.down" + std::to_string(l), out);
    enc_blocks_[l].collect("vae.enc.block" + std::to_string(l), out);
  }
  enc_out_.collect("vae.enc.conv_out", out);
  out.push_back({"vae.enc.latent_gain", latent_gain_, false});
  dec_in_.collect("vae.dec.conv_in", out);
  for (std::size_t i = 0; i < dec_up_.size(); ++i) {
    dec_blocks_[i].collect("vae.dec.block" + std::to_string(i), out);
    dec_up_[i].collect("vae.dec.up" + std::to_string(i), out);
  }
  dec_out_.collect("vae.dec.conv_out", out);
  return out;
}

std::vector<std::uint8_t> PixelAutoencoder::checkpoint_bytes() const {
  std::vector<CheckpointEntry> entries{{kMetaName,
                                        {kMetaFields},
                                        {float(config_.factor), float(config_.latent_channels),
                                         float(config_.base_width), float(config_.max_width)}}};
  for (auto& e : to_entries(params())) entries.push_back(std::move(e));
  return serialize_checkpoint(entries);
}

std::uint64_t PixelAutoencoder::hash() const { return fnv1a64(checkpoint_bytes()); }

void PixelAutoencoder::save(const std::filesystem::path& path) const { write_file(path, checkpoint_bytes()); }

PixelAutoencoder PixelAutoencoder::from_checkpoint(std::span<const std::uint8_t> bytes) {
  const auto entries = parse_checkpoint(bytes);
  const CheckpointEntry* meta = nullptr;
  for (const auto& e : entries)
    if (e.name == kMetaName) meta = &e;
  if (!meta) fail(ErrorCode::kModelMismatch, "checkpoint is not a pixel autoencoder (no meta.vae record)");
  check(meta->values.size() == kMetaFields, "checkpoint: malformed meta.vae record", ErrorCode::kFormat);
  AutoencoderConfig c;
  c.factor = as_count(meta->values[0], "factor");
  c.latent_channels = as_count(meta->values[1], "latent_channels");
  c.base_width = as_count(meta->values[2], "base_width");
  c.max_width = as_count(meta->values[3], "max_width");
  PixelAutoencoder model(c, 0);
  auto params = model.params();
  load_entries(params, entries);
  return model;
}

PixelAutoencoder PixelAutoencoder::load(const std::filesystem::path& path) {
  try {
    return from_checkpoint(read_file(path));
  } catch (const Error& e) {
    rethrow_with_stage(e, path.string());
  }
}

TrainTrace train_autoencoder(PixelAutoencoder& model, std::span<const Image> images,
                             const AutoencoderTrainOptions& options, const StepCallback& on_step) {
  check(images.size() >= 2, "train_autoencoder: need at least 2 images");
  check(options.batch >= 1 && options.steps >= 1, "train_autoencoder: batch and steps must be positive");
  for (const Image& im : images) {
    check(im.width == images[0].width && im.height == images[0].height,
          "train_autoencoder: all images must share one size");
  }
  const ParamList<float> params = model.params();
  AdamW<float> opt(params, AdamConfig{.lr = options.lr});
  Rng rng(options.seed);
  TrainTrace trace;
  std::vector<Image> batch(options.batch);
  for (std::size_t step = 1; step <= options.steps; ++step) {
    for (Image& b : batch) b = images[rng.below(images.size())];
    const Tensor<float> x = images_to_tensor(batch);
    double value = 0;
    try {
      const Tensor<float> loss = mse(model.decode(model.encode(x)), x);
      value = loss.item();
      opt.zero_grad();
      backward(loss);
    } catch (const Error& e) {
      tape<float>().clear();
      std::ostringstream msg;
      msg << "train_autoencoder: step " << step << " failed; recent losses:";
      const std::size_t from = trace.loss.size() > 10 ? trace.loss.size() - 10 : 0;
      for (std::size_t i = from; i < trace.loss.size(); ++i) msg << ' ' << trace.loss[i];
      rethrow_with_stage(e, msg.str());
    }
    opt.set_lr(warmup_lr(options.lr, step, options.warmup));
    opt.step();
    trace.loss.push_back(value);
    if (on_step) on_step(step, value);
  }
  if (options.target_latent_std > 0) {
    const double s = latent_std(model, images);
    if (s > 0) model.set_latent_gain(static_cast<float>(model.latent_gain() * options.target_latent_std / s));
  }
  return trace;
}

double latent_std(const PixelAutoencoder& model, std::span<const Image> images) {
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (const Image& im : images) {
    const Tensor<float> z = model.encode_image(im);
    for (float v : z.data()) {
      sum += v;
      sq += double(v) * v;
    }
    n += z.numel();
  }
  if (n == 0) return 0;
  const double mean = sum / double(n);
  return std::sqrt(std::max(0.0, sq / double(n) - mean * mean));
}

}  // namespace magc
