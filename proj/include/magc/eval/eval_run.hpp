#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "magc/autoencoder/autoencoder.hpp"
#include "magc/codec/lcm_model.hpp"
#include "magc/diffusion/diffusion.hpp"
#include "magc/eval/evalkit.hpp"
#include "magc/io/dataset.hpp"

namespace magc {

enum class DecodeBackend { kPixelDecoder, kDiffusion };

DecodeBackend parse_backend(const std::string& name);
std::string backend_name(DecodeBackend backend);

struct EvalOptions {
  DecodeBackend backend = DecodeBackend::kPixelDecoder;
  std::size_t steps = 50;    // diffusion sampling steps
  std::uint64_t seed = 0;    // image i is sampled with seed + i
  std::size_t threads = 1;   // images evaluated concurrently
  // Optional directory of predicted label rasters, laid out as
  // <dir>/<lambda_index>/<image stem>.pgm, scored against the dataset maps.
  std::optional<std::filesystem::path> predicted_maps;
};

struct EvalRow {
  std::string image;
  std::uint8_t lambda_index = 0;
  double lambda = 0.0;
  std::string backend;
  std::size_t steps = 0;
  std::size_t file_bytes = 0;
  double bpp = 0.0;
  double psnr = 0.0;
  double miou = 0.0;  // NaN without predicted maps
};

struct EvalReport {
  std::vector<EvalRow> rows;  // image-major, models in the given order
  // One point per model: mean bpp and mean PSNR, sorted by bpp.
  RDCurve curve;
};

// Compresses and reconstructs every image with every model. |denoiser| is
// required for the diffusion backend.
EvalReport eval_run(const PixelAutoencoder& autoencoder, std::span<const LcmModel> models,
                    const Denoiser* denoiser, const DatasetManifest& manifest, std::span<const Sample> samples,
                    const EvalOptions& options);

// Columns: image,lambda_index,lambda,backend,steps,file_bytes,bpp,psnr,miou
std::string report_csv(const EvalReport& report);

// Worker count from MAGC_THREADS, else the hardware concurrency; at least 1.
std::size_t default_threads();

}  // namespace magc
