#include "magc/eval/eval_run.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <thread>

#include "magc/codec/codec.hpp"
#include "magc/error.hpp"

namespace magc {

DecodeBackend parse_backend(const std::string& name) {
  if (name == "pixel-decoder") return DecodeBackend::kPixelDecoder;
  if (name == "diffusion") return DecodeBackend::kDiffusion;
  fail(ErrorCode::kUsage, "unknown backend '" + name + "' (expected pixel-decoder or diffusion)");
}

std::string backend_name(DecodeBackend backend) {
  return backend == DecodeBackend::kPixelDecoder ? "pixel-decoder" : "diffusion";
}

std::size_t default_threads() {
  if (const char* env = std::getenv("MAGC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    check(end != env && *end == '\0' && v >= 1, "MAGC_THREADS must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

EvalReport eval_run(const PixelAutoencoder& autoencoder, std::span<const LcmModel> models,
                    const Denoiser* denoiser, const DatasetManifest& manifest, std::span<const Sample> samples,
                    const EvalOptions& options) {
  check(!models.empty(), "eval: no compression models given");
  check(samples.size() == manifest.pairs.size(), "eval: samples do not match the manifest");
  check(options.backend != DecodeBackend::kDiffusion || denoiser != nullptr,
        "eval: the diffusion backend needs a denoiser checkpoint");
  check(options.steps >= 1, "eval: steps must be positive");
  const NoiseSchedule schedule = NoiseSchedule::linear();
  if (options.predicted_maps) {
    std::vector<std::string> missing;
    for (const LcmModel& m : models) {
      for (const DatasetPair& p : manifest.pairs) {
        const auto f = *options.predicted_maps / std::to_string(m.config().lambda_index) /
                       (p.image.stem().string() + ".pgm");
        if (!std::filesystem::exists(f)) missing.push_back(f.string());
      }
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& f : missing) list += "\n  " + f;
      fail(ErrorCode::kIo, "eval: missing predicted maps:" + list);
    }
  }

  const std::size_t n = samples.size(), k = models.size();
  std::vector<EvalRow> rows(n * k);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        const Sample& s = samples[i];
        const Tensor<float> z0 = autoencoder.encode_image(s.image);
        for (std::size_t j = 0; j < k; ++j) {
          const LcmModel& model = models[j];
          const CompressResult r = compress(model, z0, s.map, static_cast<std::uint32_t>(s.image.width),
                                            static_cast<std::uint32_t>(s.image.height));
          const Tensor<float> z_hat = decompress(r.bytes, model, s.map);
          const Tensor<float> z_out = options.backend == DecodeBackend::kPixelDecoder
                                          ? z_hat
                                          : guided_sample(*denoiser, schedule, z_hat, s.map, options.steps,
                                                          options.seed + i);
          EvalRow& row = rows[i * k + j];
          row.image = manifest.pairs[i].image.stem().string();
          row.lambda_index = model.config().lambda_index;
          row.lambda = model.config().lambda;
          row.backend = backend_name(options.backend);
          row.steps = options.backend == DecodeBackend::kDiffusion ? options.steps : 0;
          row.file_bytes = r.report.file_bytes;
          row.bpp = r.report.bpp;
          row.psnr = psnr(autoencoder.decode_latent(z_out), s.image);
          row.miou = std::numeric_limits<double>::quiet_NaN();
          if (options.predicted_maps) {
            const auto f = *options.predicted_maps / std::to_string(row.lambda_index) / (row.image + ".pgm");
            row.miou = miou(read_map(f, s.map.num_classes), s.map);
          }
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, n == 0 ? 1 : n);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      rethrow_with_stage(e, "eval " + manifest.pairs[i].image.string());
    }
  }

  EvalReport report;
  report.rows = std::move(rows);
  report.curve.label = "psnr";
  for (std::size_t j = 0; j < k; ++j) {
    RDPoint p;
    for (std::size_t i = 0; i < n; ++i) {
      p.bpp += report.rows[i * k + j].bpp / double(n);
      p.quality += report.rows[i * k + j].psnr / double(n);
    }
    report.curve.points.push_back(p);
  }
  std::sort(report.curve.points.begin(), report.curve.points.end(),
            [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  return report;
}

std::string report_csv(const EvalReport& report) {
  std::string out = "image,lambda_index,lambda,backend,steps,file_bytes,bpp,psnr,miou\n";
  char buf[256];
  for (const EvalRow& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%u,%.6g,%s,%zu,%zu,%.9g,%.6f,%.6f\n", r.image.c_str(), unsigned(r.lambda_index),
                  r.lambda, r.backend.c_str(), r.steps, r.file_bytes, r.bpp, r.psnr, r.miou);
    out += buf;
  }
  return out;
}

}  // namespace magc
