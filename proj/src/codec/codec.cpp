#include "magc/codec/codec.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "magc/coding/range_coder.hpp"
#include "magc/error.hpp"
#include "magc/tensor/tape.hpp"

namespace magc {
namespace {

template <typename F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    rethrow_with_stage(e, stage);
  }
}

std::vector<std::int32_t> to_symbols(const Tensor<float>& rounded) {
  std::vector<std::int32_t> out(rounded.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float v = rounded.ptr()[i];
    check(std::abs(v) < 2147483520.0f, "symbol magnitude exceeds the 32-bit range", ErrorCode::kNumeric);
    out[i] = static_cast<std::int32_t>(v);
  }
  return out;
}

std::vector<double> widen(const Tensor<float>& t) { return {t.data().begin(), t.data().end()}; }

Tensor<float> round_tensor(const Tensor<float>& t) {
  Tensor<float> out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) out.mutable_ptr()[i] = std::round(t.ptr()[i]);
  return out;
}

std::vector<std::uint8_t> encode_field(const Tensor<float>& symbols, const GaussianField<float>& field, int radius) {
  const auto s = to_symbols(symbols);
  const auto mu = widen(field.mu);
  const auto sigma = widen(field.sigma);
  return encode_symbols(s, mu, sigma, radius);
}

Tensor<float> decode_field(const std::vector<std::uint8_t>& bytes, const GaussianField<float>& field, int radius) {
  const float* mu = field.mu.ptr();
  const float* sigma = field.sigma.ptr();
  const auto symbols = decode_symbols(bytes, field.mu.numel(), [&](std::size_t i) {
    return std::make_pair(static_cast<double>(mu[i]), static_cast<double>(sigma[i]));
  }, radius);
  Tensor<float> out(field.mu.shape());
  for (std::size_t i = 0; i < symbols.size(); ++i) out.mutable_ptr()[i] = static_cast<float>(symbols[i]);
  return out;
}

void check_latent_shape(const LcmModel& model, const Tensor<float>& z0) {
  const TransformConfig& t = model.config().transform;
  const std::size_t f = std::size_t{1} << (t.scales + 2);
  check(z0.rank() == 4 && z0.dim(0) == 1 && z0.dim(1) == t.latent_channels,
        "expected a (1, " + std::to_string(t.latent_channels) + ", h, w) latent, got " + shape_str(z0.shape()));
  check(z0.dim(2) % f == 0 && z0.dim(3) % f == 0,
        "latent " + shape_str(z0.shape()) + " is not divisible by " + std::to_string(f));
  check(z0.dim(2) <= 0xFFFF && z0.dim(3) <= 0xFFFF, "latent too large for the stream header");
}

void check_map(const LcmModel& model, const MapRaster& map, std::size_t width, std::size_t height) {
  if (!model.config().transform.use_map) return;
  check(map.width == width && map.height == height,
        "map is " + std::to_string(map.width) + "x" + std::to_string(map.height) + " but the image is " +
            std::to_string(width) + "x" + std::to_string(height));
  check(map.num_classes == model.config().transform.map_classes, "map class count does not match the model");
}

}  // namespace

CompressResult compress(const LcmModel& model, const Tensor<float>& z0, const MapRaster& map,
                        std::uint32_t image_width, std::uint32_t image_height) {
  NoGradGuard no_grad;
  const LcmConfig& cfg = model.config();
  const int radius = cfg.support_radius;
  staged("compress/input", [&] {
    check_latent_shape(model, z0);
    check_map(model, map, image_width, image_height);
    return 0;
  });
  const std::size_t h = z0.dim(2), w = z0.dim(3);
  const auto sem = staged("compress/semantic", [&] { return model.semantic(std::span<const MapRaster>(&map, 1), h, w); });
  const Tensor<float> y = staged("compress/analysis", [&] { return model.ga(z0, sem, Phase::kEval); });

  CompressResult result;
  Container& c = result.container;
  CompressReport& rep = result.report;

  const Tensor<float> h_hat = staged("compress/hyper", [&] { return round_tensor(model.ha(y)); });
  const auto prior = model.fp.field(1, h_hat.dim(2), h_hat.dim(3));
  c.hyper = staged("compress/hyper-coding", [&] { return encode_field(h_hat, prior, radius); });
  {
    const RateEstimate est = estimate_rate_discrete(h_hat, prior);
    rep.estimated_bits += est.bits;
    rep.clamped_bins += est.clamped;
  }
  const Tensor<float> gc = staged("compress/hyper-synthesis", [&] { return model.hs(h_hat); });

  const SliceLayout& layout = model.cm.layout();
  std::vector<Tensor<float>> y_hat_slices;
  for (std::size_t i = 0; i < layout.slices(); ++i) {
    const std::string stage = "compress/slice " + std::to_string(i);
    staged(stage.c_str(), [&] {
      const auto field = model.cm.predict(gc, y_hat_slices, i);
      const Tensor<float> yi = round_tensor(slice_channels(y, layout.begin(i), layout.end(i)));
      c.slices.push_back(encode_field(yi, field, radius));
      const RateEstimate est = estimate_rate_discrete(yi, field);
      rep.estimated_bits += est.bits;
      rep.clamped_bins += est.clamped;
      y_hat_slices.push_back(yi);
      return 0;
    });
  }
  const Tensor<float> y_hat = concat<float>(std::span<const Tensor<float>>(y_hat_slices), 1);
  result.z_hat = staged("compress/synthesis", [&] { return model.gs(y_hat, sem, Phase::kEval); });

  ContainerHeader& hd = c.header;
  hd.flags = cfg.transform.use_map ? kFlagMapConditioned : 0;
  hd.width = image_width;
  hd.height = image_height;
  hd.latent_c = static_cast<std::uint8_t>(cfg.transform.latent_channels);
  hd.latent_h = static_cast<std::uint16_t>(h);
  hd.latent_w = static_cast<std::uint16_t>(w);
  hd.N = static_cast<std::uint16_t>(cfg.transform.N);
  hd.M = static_cast<std::uint16_t>(cfg.transform.M);
  hd.K = static_cast<std::uint8_t>(layout.slices());
  hd.lambda_index = cfg.lambda_index;
  hd.model_hash = model.hash();
  result.bytes = serialize_container(c);

  rep.file_bytes = result.bytes.size();
  rep.bpp = 8.0 * static_cast<double>(rep.file_bytes) / (double(image_width) * double(image_height));
  rep.hyper_bits = 8 * c.hyper.size();
  std::size_t payload_bits = rep.hyper_bits;
  for (const auto& s : c.slices) {
    rep.slice_bits.push_back(8 * s.size());
    payload_bits += 8 * s.size();
  }
  rep.coded_bits = static_cast<double>(payload_bits);
  rep.header_bits = 8 * rep.file_bytes - payload_bits;
  return result;
}

LatentSymbols decode_latent(const Container& container, const LcmModel& model, std::size_t max_slices) {
  NoGradGuard no_grad;
  const LcmConfig& cfg = model.config();
  const ContainerHeader& hd = container.header;
  const std::size_t f = std::size_t{1} << (cfg.transform.scales + 2);
  check(hd.latent_h % f == 0 && hd.latent_w % f == 0 && hd.latent_h > 0 && hd.latent_w > 0,
        "stream latent size is incompatible with the model", ErrorCode::kFormat);
  const std::size_t yh = hd.latent_h >> cfg.transform.scales, yw = hd.latent_w >> cfg.transform.scales;

  LatentSymbols out;
  const auto prior = model.fp.field(1, yh / 4, yw / 4);
  out.h_hat = staged("decompress/hyper-coding", [&] { return decode_field(container.hyper, prior, cfg.support_radius); });
  const Tensor<float> gc = staged("decompress/hyper-synthesis", [&] { return model.hs(out.h_hat); });
  const std::size_t k = std::min<std::size_t>(max_slices, model.cm.layout().slices());
  for (std::size_t i = 0; i < k; ++i) {
    const std::string stage = "decompress/slice " + std::to_string(i);
    out.y_slices.push_back(staged(stage.c_str(), [&] {
      const auto field = model.cm.predict(gc, out.y_slices, i);
      return decode_field(container.slices.at(i), field, cfg.support_radius);
    }));
  }
  return out;
}

Tensor<float> decompress(const Container& container, const LcmModel& model, const MapRaster& map) {
  const ContainerHeader& hd = container.header;
  const LcmConfig& cfg = model.config();
  if (hd.model_hash != model.hash()) {
    std::ostringstream msg;
    msg << "decompress: stream was produced by model " << std::hex << hd.model_hash << " but the loaded model is "
        << model.hash();
    fail(ErrorCode::kModelMismatch, msg.str());
  }
  check(hd.map_conditioned() == cfg.transform.use_map && hd.K == cfg.slices && hd.M == cfg.transform.M &&
            hd.N == cfg.transform.N && hd.latent_c == cfg.transform.latent_channels,
        "decompress: stream header disagrees with the model configuration", ErrorCode::kModelMismatch);
  staged("decompress/input", [&] {
    check_map(model, map, hd.width, hd.height);
    return 0;
  });
  const LatentSymbols sym = decode_latent(container, model, hd.K);
  NoGradGuard no_grad;
  const auto sem = staged("decompress/semantic", [&] {
    return model.semantic(std::span<const MapRaster>(&map, 1), hd.latent_h, hd.latent_w);
  });
  const Tensor<float> y_hat = concat<float>(std::span<const Tensor<float>>(sym.y_slices), 1);
  return staged("decompress/synthesis", [&] { return model.gs(y_hat, sem, Phase::kEval); });
}

Tensor<float> decompress(std::span<const std::uint8_t> bytes, const LcmModel& model, const MapRaster& map) {
  return decompress(parse_container(bytes), model, map);
}

}  // namespace magc
