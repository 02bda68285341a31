// magc: command-line front end for data generation, training, coding and
// evaluation.

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "magc/autoencoder/autoencoder.hpp"
#include "magc/codec/codec.hpp"
#include "magc/codec/lcm_model.hpp"
#include "magc/diffusion/diffusion.hpp"
#include "magc/error.hpp"
#include "magc/eval/eval_run.hpp"
#include "magc/eval/evalkit.hpp"
#include "magc/io/bytes.hpp"
#include "magc/io/dataset.hpp"
#include "magc/io/image.hpp"
#include "magc/io/kv_config.hpp"
#include "magc/training/training.hpp"

namespace fs = std::filesystem;
using namespace magc;

namespace {

// Options shared by the training commands. Values given on the command line
// override the configuration file.
struct Common {
  std::string config;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::size_t log_every = 100;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--preset", c.preset, "Model and schedule preset")->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--steps", c.steps, "Optimizer steps");
  cmd->add_option("--log-every", c.log_every, "Progress line interval in steps (0 disables)");
}

// Top-level keys plus the keys under "<section>.", with the prefix removed,
// then the command-line overrides.
KvConfig section(const Common& c, const std::string& name) {
  KvConfig out;
  if (!c.config.empty()) {
    const KvConfig file = KvConfig::load(c.config);
    for (const auto& [k, v] : file.values()) {
      if (k.find('.') == std::string::npos) out.set(k, v);
    }
    const std::string prefix = name + ".";
    for (const auto& [k, v] : file.values()) {
      if (k.rfind(prefix, 0) == 0) out.set(k.substr(prefix.size()), v);
    }
  }
  if (c.preset) out.set("preset", *c.preset);
  if (c.seed) out.set("seed", std::to_string(*c.seed));
  if (c.steps) {
    out.set("steps", std::to_string(*c.steps));
    if (out.has("warmup") && out.get_int("warmup", 0) > static_cast<long long>(*c.steps)) {
      std::fprintf(stderr, "note: warmup shortened to --steps %zu\n", *c.steps);
      out.set("warmup", std::to_string(*c.steps));
    }
  }
  return out;
}

bool is_desk(const KvConfig& kv) {
  const std::string preset = kv.get("preset", "paper");
  check(preset == "paper" || preset == "desk", "unknown preset '" + preset + "'");
  return preset == "desk";
}

StepCallback progress(const char* what, std::size_t total, std::size_t every, std::ostream* csv) {
  return [=](std::size_t step, double loss) {
    if (csv) *csv << step << ',' << loss << '\n';
    if (every != 0 && (step % every == 0 || step == total)) {
      std::fprintf(stderr, "%s step %zu/%zu loss %.6g\n", what, step, total, loss);
    }
  };
}

std::optional<std::ofstream> open_log(const std::string& path) {
  if (path.empty()) return std::nullopt;
  std::ofstream out(path);
  check(bool(out), "cannot write " + path, ErrorCode::kIo);
  return out;
}

MapRaster load_map_for(const LcmModel& model, const std::string& path) {
  if (!model.config().transform.use_map) return {};
  check(!path.empty(), "this model is map-conditioned: --map is required");
  return read_map(path, model.config().transform.map_classes);
}

// --- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  std::size_t count = 100;
  std::size_t size = 64;
  std::size_t classes = 4;
  std::uint64_t seed = 42;
  std::string split = "train";
};

int run_gen_data(const GenDataArgs& a) {
  SyntheticSceneSpec spec;
  spec.width = spec.height = a.size;
  spec.num_classes = a.classes;
  spec.seed = a.seed;
  const DatasetManifest m = gen_data(spec, a.count, a.out, a.split);
  std::printf("wrote %zu pairs to %s\n", m.pairs.size(), (fs::path(a.out) / "manifest.txt").string().c_str());
  return 0;
}

// --- train-vae --------------------------------------------------------------

struct TrainVaeArgs {
  Common common;
  std::string data, out, log;
};

int run_train_vae(const TrainVaeArgs& a) {
  const KvConfig kv = section(a.common, "vae");
  const bool desk = is_desk(kv);
  AutoencoderTrainOptions opt;
  opt.steps = static_cast<std::size_t>(kv.get_int("steps", static_cast<long long>(opt.steps)));
  opt.batch = static_cast<std::size_t>(kv.get_int("batch", static_cast<long long>(opt.batch)));
  opt.lr = kv.get_double("lr", opt.lr);
  opt.warmup = static_cast<std::size_t>(kv.get_int("warmup", static_cast<long long>(opt.warmup)));
  opt.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  opt.target_latent_std = kv.get_double("latent_std", opt.target_latent_std);

  const DatasetManifest manifest = DatasetManifest::load(a.data);
  const std::vector<Sample> samples = load_samples(manifest);
  std::vector<Image> images;
  for (const Sample& s : samples) images.push_back(s.image);

  PixelAutoencoder model(desk ? AutoencoderConfig::desk() : AutoencoderConfig::paper(), opt.seed);
  auto log = open_log(a.log);
  if (log) *log << "step,loss\n";
  train_autoencoder(model, images, opt, progress("vae", opt.steps, a.common.log_every, log ? &*log : nullptr));
  model.save(a.out);
  double err = 0.0;
  for (const Image& im : images) err += mean_squared_error(model.decode_latent(model.encode_image(im)), im);
  err /= double(images.size());
  std::printf("latent_gain=%.6g train_psnr=%.3f\n", model.latent_gain(), 10.0 * std::log10(1.0 / err));
  return 0;
}

// --- train-lcm --------------------------------------------------------------

struct TrainLcmArgs {
  Common common;
  std::string data, heldout, vae, out, log;
  std::optional<int> lambda_index;
  std::vector<int> grid;
  bool no_map = false;
};

LcmConfig lcm_config_for(const KvConfig& kv, const TrainConfig& tc, std::size_t map_classes, bool no_map) {
  LcmConfig lc = is_desk(kv) ? LcmConfig::desk() : LcmConfig::paper();
  lc.transform.map_classes = map_classes;
  lc.transform.use_map = !no_map && kv.get_bool("use_map", true);
  lc.slices = static_cast<std::size_t>(kv.get_int("slices", static_cast<long long>(lc.slices)));
  lc.lambda = tc.lambda;
  lc.lambda_index = tc.lambda_index;
  return lc;
}

int run_train_lcm(const TrainLcmArgs& a) {
  KvConfig kv = section(a.common, "lcm");
  if (a.lambda_index) {
    check(*a.lambda_index >= 0 && *a.lambda_index < int(std::size(kLambdaGrid)), "--lambda-index out of range");
    kv.set("lambda_index", std::to_string(*a.lambda_index));
    kv.set("lambda", std::to_string(kLambdaGrid[*a.lambda_index]));
  }
  const TrainConfig tc = TrainConfig::from_kv(kv);
  tc.validate();
  const PixelAutoencoder vae = PixelAutoencoder::load(a.vae);
  const DatasetManifest manifest = DatasetManifest::load(a.data);
  const std::vector<Sample> train = load_samples(manifest);
  const LcmConfig lc = lcm_config_for(kv, tc, manifest.num_classes, a.no_map);

  if (!a.grid.empty()) {
    std::vector<double> lambdas;
    std::vector<std::uint8_t> indices;
    for (int i : a.grid) {
      check(i >= 0 && i < int(std::size(kLambdaGrid)), "--grid index out of range");
      lambdas.push_back(kLambdaGrid[i]);
      indices.push_back(static_cast<std::uint8_t>(i));
    }
    std::vector<Sample> heldout = a.heldout.empty() ? train : load_samples(DatasetManifest::load(a.heldout));
    fs::create_directories(a.out);
    const std::vector<GridPoint> points = train_rd_grid(vae, train, heldout, lambdas, indices, lc, tc, a.out);
    RDCurve curve;
    curve.label = "psnr";
    std::printf("lambda_index,lambda,bpp,psnr,latent_mse,checkpoint\n");
    for (const GridPoint& p : points) {
      std::printf("%u,%.6g,%.6f,%.4f,%.6g,%s\n", unsigned(p.lambda_index), p.lambda, p.bpp, p.psnr, p.latent_mse,
                  p.checkpoint.string().c_str());
      curve.points.push_back({p.bpp, p.psnr});
    }
    std::sort(curve.points.begin(), curve.points.end(),
              [](const RDPoint& x, const RDPoint& y) { return x.bpp < y.bpp; });
    curve.save_csv(fs::path(a.out) / "rd_pixel-decoder.csv");
    return 0;
  }

  const LatentSet latents = encode_dataset(vae, train);
  LcmModel model(lc, tc.seed);
  auto log = open_log(a.log);
  const std::size_t every = a.common.log_every;
  const std::size_t total = tc.steps;
  train_stage1(model, latents, tc, log ? &*log : nullptr, [=](std::size_t step, double loss) {
    if (every != 0 && (step % every == 0 || step == total)) {
      std::fprintf(stderr, "lcm step %zu/%zu loss %.6g\n", step, total, loss);
    }
  });
  model.save(a.out);
  const RDLossBreakdown rd = evaluate_rd(model, slice_batch(latents, 0, latents.size()), tc.lambda);
  std::printf("lambda=%.6g rate=%.6f distortion=%.6f total=%.6f\n", tc.lambda, rd.rate, rd.distortion, rd.total);
  return 0;
}

// --- train-diffusion --------------------------------------------------------

struct TrainDiffusionArgs {
  Common common;
  std::string data, vae, lcm, out, log, finetune_gs;
};

int run_train_diffusion(const TrainDiffusionArgs& a) {
  const KvConfig kv = section(a.common, "diffusion");
  DenoiserTrainOptions opt;
  opt.steps = static_cast<std::size_t>(kv.get_int("steps", static_cast<long long>(opt.steps)));
  opt.batch = static_cast<std::size_t>(kv.get_int("batch", static_cast<long long>(opt.batch)));
  opt.lr = kv.get_double("lr", opt.lr);
  opt.warmup = static_cast<std::size_t>(kv.get_int("warmup", static_cast<long long>(opt.warmup)));
  opt.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));

  const PixelAutoencoder vae = PixelAutoencoder::load(a.vae);
  LcmModel lcm = LcmModel::load(a.lcm);
  const DatasetManifest manifest = DatasetManifest::load(a.data);
  const std::vector<Sample> samples = load_samples(manifest);
  const std::vector<DiffusionSample> set = build_diffusion_set(lcm, encode_dataset(vae, samples));

  DenoiserConfig dc = is_desk(kv) ? DenoiserConfig::desk() : DenoiserConfig::paper();
  dc.latent_channels = vae.config().latent_channels;
  dc.map_classes = manifest.num_classes;
  Denoiser denoiser(dc, opt.seed);
  auto log = open_log(a.log);
  if (log) *log << "step,loss\n";
  const TrainTrace trace =
      train_denoiser(denoiser, set, NoiseSchedule::linear(), opt, a.finetune_gs.empty() ? nullptr : &lcm,
                     progress("diffusion", opt.steps, a.common.log_every, log ? &*log : nullptr));
  denoiser.save(a.out);
  if (!a.finetune_gs.empty()) lcm.save(a.finetune_gs);
  const auto tail = smoothed(trace.loss, 100);
  std::printf("latent_scale=%.6g final_loss=%.6f\n", denoiser.config().latent_scale, tail.empty() ? 0.0 : tail.back());
  return 0;
}

// --- compress / decompress --------------------------------------------------

struct CompressArgs {
  std::string image, map, vae, lcm, out;
};

int run_compress(const CompressArgs& a) {
  const PixelAutoencoder vae = PixelAutoencoder::load(a.vae);
  const LcmModel lcm = LcmModel::load(a.lcm);
  const Image image = read_ppm(a.image);
  const MapRaster map = load_map_for(lcm, a.map);
  const CompressResult r = compress(lcm, vae.encode_image(image), map, static_cast<std::uint32_t>(image.width),
                                    static_cast<std::uint32_t>(image.height));
  write_file(a.out, r.bytes);
  std::printf("bpp=%.6f\n", r.report.bpp);
  return 0;
}

struct DecompressArgs {
  std::string in, map, vae, lcm, unet, out, reference;
  std::string backend = "pixel-decoder";
  std::size_t steps = 50;
  std::uint64_t seed = 0;
};

int run_decompress(const DecompressArgs& a) {
  const DecodeBackend backend = parse_backend(a.backend);
  check(backend != DecodeBackend::kDiffusion || !a.unet.empty(), "the diffusion backend needs --unet");
  check(a.steps >= 1, "--steps must be positive");
  const PixelAutoencoder vae = PixelAutoencoder::load(a.vae);
  const LcmModel lcm = LcmModel::load(a.lcm);
  const MapRaster map = load_map_for(lcm, a.map);
  const std::vector<std::uint8_t> bytes = read_file(a.in);
  Tensor<float> z = decompress(bytes, lcm, map);
  if (backend == DecodeBackend::kDiffusion) {
    const Denoiser denoiser = Denoiser::load(a.unet);
    z = guided_sample(denoiser, NoiseSchedule::linear(), z, map, a.steps, a.seed);
  }
  const Image out = quantize8(vae.decode_latent(z));
  write_ppm(a.out, out);
  if (!a.reference.empty()) {
    const Image ref = read_ppm(a.reference);
    std::printf("psnr=%.4f\n", psnr(out, ref));
  }
  return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string data, vae, unet, out, curve, pred_maps;
  std::vector<std::string> lcm;
  std::string backend = "pixel-decoder";
  std::size_t steps = 50;
  std::uint64_t seed = 0;
  std::optional<std::size_t> threads;
};

int run_eval(const EvalArgs& a) {
  EvalOptions opt;
  opt.backend = parse_backend(a.backend);
  opt.steps = a.steps;
  opt.seed = a.seed;
  opt.threads = a.threads.value_or(default_threads());
  if (!a.pred_maps.empty()) opt.predicted_maps = a.pred_maps;
  check(opt.backend != DecodeBackend::kDiffusion || !a.unet.empty(), "the diffusion backend needs --unet");

  const PixelAutoencoder vae = PixelAutoencoder::load(a.vae);
  std::vector<LcmModel> models;
  for (const std::string& p : a.lcm) models.push_back(LcmModel::load(p));
  std::optional<Denoiser> denoiser;
  if (opt.backend == DecodeBackend::kDiffusion) denoiser.emplace(Denoiser::load(a.unet));
  const DatasetManifest manifest = DatasetManifest::load(a.data);
  const std::vector<Sample> samples = load_samples(manifest);

  const EvalReport report = eval_run(vae, models, denoiser ? &*denoiser : nullptr, manifest, samples, opt);
  const std::string csv = report_csv(report);
  if (a.out.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    write_file(a.out, std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
  }
  if (!a.curve.empty()) report.curve.save_csv(a.curve);
  for (const RDPoint& p : report.curve.points) {
    std::fprintf(stderr, "mean bpp=%.6f psnr=%.4f\n", p.bpp, p.quality);
  }
  return 0;
}

// --- bd ---------------------------------------------------------------------

struct BdArgs {
  std::string anchor, test;
  bool pchip = false;
};

int run_bd(const BdArgs& a) {
  const RDCurve anchor = RDCurve::load_csv(a.anchor);
  const RDCurve test = RDCurve::load_csv(a.test);
  const BdMethod method = a.pchip ? BdMethod::kPchip : BdMethod::kCubic;
  std::vector<std::string> warnings;
  const double q = bd_quality(anchor, test, method, &warnings);
  const double r = bd_rate(anchor, test, method, &warnings);
  for (const std::string& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("BD-quality=%.6f\nBD-rate=%.6f%%\n", q, r);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Map-assisted latent image compression"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a synthetic image/map dataset");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--count", gen.count, "Number of pairs")->check(CLI::PositiveNumber);
  c_gen->add_option("--size", gen.size, "Image width and height")->check(CLI::PositiveNumber);
  c_gen->add_option("--classes", gen.classes, "Map classes")->check(CLI::Range(2, 8));
  c_gen->add_option("--seed", gen.seed, "Random seed");
  c_gen->add_option("--split", gen.split, "Split name stored in the manifest");

  TrainVaeArgs vae;
  auto* c_vae = app.add_subcommand("train-vae", "Train the pixel autoencoder");
  add_common(c_vae, vae.common);
  c_vae->add_option("--data", vae.data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  c_vae->add_option("--out", vae.out, "Output checkpoint")->required();
  c_vae->add_option("--log", vae.log, "Loss CSV");

  TrainLcmArgs lcm;
  auto* c_lcm = app.add_subcommand("train-lcm", "Train the latent compression module");
  add_common(c_lcm, lcm.common);
  c_lcm->add_option("--data", lcm.data, "Training manifest")->required()->check(CLI::ExistingFile);
  c_lcm->add_option("--vae", lcm.vae, "Autoencoder checkpoint")->required()->check(CLI::ExistingFile);
  c_lcm->add_option("--out", lcm.out, "Output checkpoint, or directory with --grid")->required();
  c_lcm->add_option("--lambda-index", lcm.lambda_index, "Index into the lambda grid");
  c_lcm->add_option("--grid", lcm.grid, "Train one model per lambda index")->delimiter(',');
  c_lcm->add_option("--heldout", lcm.heldout, "Held-out manifest for --grid")->check(CLI::ExistingFile);
  c_lcm->add_option("--log", lcm.log, "Loss CSV (step,L_rate,L_ld,total,lr)");
  c_lcm->add_flag("--no-map", lcm.no_map, "Train without map conditioning");

  TrainDiffusionArgs dif;
  auto* c_dif = app.add_subcommand("train-diffusion", "Train the guided latent denoiser");
  add_common(c_dif, dif.common);
  c_dif->add_option("--data", dif.data, "Training manifest")->required()->check(CLI::ExistingFile);
  c_dif->add_option("--vae", dif.vae, "Autoencoder checkpoint")->required()->check(CLI::ExistingFile);
  c_dif->add_option("--lcm", dif.lcm, "Compression model checkpoint")->required()->check(CLI::ExistingFile);
  c_dif->add_option("--out", dif.out, "Output denoiser checkpoint")->required();
  c_dif->add_option("--finetune-gs", dif.finetune_gs, "Also fine-tune the synthesis transform; save the LCM here");
  c_dif->add_option("--log", dif.log, "Loss CSV");

  CompressArgs cmp;
  auto* c_cmp = app.add_subcommand("compress", "Compress an image");
  c_cmp->add_option("--image", cmp.image, "Input PPM")->required()->check(CLI::ExistingFile);
  c_cmp->add_option("--map", cmp.map, "Label map PGM")->check(CLI::ExistingFile);
  c_cmp->add_option("--vae", cmp.vae, "Autoencoder checkpoint")->required()->check(CLI::ExistingFile);
  c_cmp->add_option("--lcm", cmp.lcm, "Compression model checkpoint")->required()->check(CLI::ExistingFile);
  c_cmp->add_option("--out", cmp.out, "Output stream")->required();

  DecompressArgs dec;
  auto* c_dec = app.add_subcommand("decompress", "Reconstruct an image from a stream");
  c_dec->add_option("--in", dec.in, "Input stream")->required()->check(CLI::ExistingFile);
  c_dec->add_option("--map", dec.map, "Label map PGM")->check(CLI::ExistingFile);
  c_dec->add_option("--vae", dec.vae, "Autoencoder checkpoint")->required()->check(CLI::ExistingFile);
  c_dec->add_option("--lcm", dec.lcm, "Compression model checkpoint")->required()->check(CLI::ExistingFile);
  c_dec->add_option("--backend", dec.backend, "pixel-decoder or diffusion")
      ->check(CLI::IsMember({"pixel-decoder", "diffusion"}));
  c_dec->add_option("--unet", dec.unet, "Denoiser checkpoint")->check(CLI::ExistingFile);
  c_dec->add_option("--steps", dec.steps, "Diffusion sampling steps");
  c_dec->add_option("--seed", dec.seed, "Sampling seed");
  c_dec->add_option("--out", dec.out, "Output PPM")->required();
  c_dec->add_option("--reference", dec.reference, "Original image; prints PSNR")->check(CLI::ExistingFile);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Rate and quality over a dataset");
  c_ev->add_option("--data", ev.data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--vae", ev.vae, "Autoencoder checkpoint")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--lcm", ev.lcm, "Compression model checkpoints")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--backend", ev.backend, "pixel-decoder or diffusion")
      ->check(CLI::IsMember({"pixel-decoder", "diffusion"}));
  c_ev->add_option("--unet", ev.unet, "Denoiser checkpoint")->check(CLI::ExistingFile);
  c_ev->add_option("--steps", ev.steps, "Diffusion sampling steps");
  c_ev->add_option("--seed", ev.seed, "Sampling seed; image i uses seed + i");
  c_ev->add_option("--pred-maps", ev.pred_maps, "Predicted label maps, <dir>/<lambda_index>/<stem>.pgm")
      ->check(CLI::ExistingDirectory);
  c_ev->add_option("--threads", ev.threads, "Images evaluated in parallel (default MAGC_THREADS)");
  c_ev->add_option("--out", ev.out, "Per-image CSV (default stdout)");
  c_ev->add_option("--curve", ev.curve, "Mean rate-quality curve CSV");

  BdArgs bd;
  auto* c_bd = app.add_subcommand("bd", "Bjontegaard deltas between two RD curves");
  c_bd->add_option("--anchor", bd.anchor, "Anchor curve CSV (bpp,quality)")->required()->check(CLI::ExistingFile);
  c_bd->add_option("--test", bd.test, "Test curve CSV")->required()->check(CLI::ExistingFile);
  c_bd->add_flag("--pchip", bd.pchip, "Piecewise cubic Hermite interpolation instead of a cubic fit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorCode::kUsage);
  }

  try {
    if (*c_gen) return run_gen_data(gen);
    if (*c_vae) return run_train_vae(vae);
    if (*c_lcm) return run_train_lcm(lcm);
    if (*c_dif) return run_train_diffusion(dif);
    if (*c_cmp) return run_compress(cmp);
    if (*c_dec) return run_decompress(dec);
    if (*c_ev) return run_eval(ev);
    if (*c_bd) return run_bd(bd);
  } catch (const Error& e) {
    std::fprintf(stderr, "magc: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "magc: %s\n", e.what());
    return static_cast<int>(ErrorCode::kIo);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "magc: %s\n", e.what());
    return static_cast<int>(ErrorCode::kUsage);
  }
  return static_cast<int>(ErrorCode::kUsage);
}
