#include "magc/codec/lcm_model.hpp"

#include <cmath>

#include "magc/error.hpp"
#include "magc/io/bytes.hpp"

namespace magc {
namespace {

constexpr const char* kMetaName = "meta.lcm";
constexpr std::size_t kMetaFields = 10;

CheckpointEntry meta_entry(const LcmConfig& c) {
  const TransformConfig& t = c.transform;
  return {kMetaName,
          {kMetaFields},
          {float(t.N), float(t.M), float(t.latent_channels), float(t.scales), float(t.map_classes),
           float(t.spade_hidden), t.use_map ? 1.0f : 0.0f, float(c.slices), float(c.lambda_index), float(c.lambda)}};
}

std::size_t as_count(float v, const char* what) {
  check(v >= 0.0f && v < 65536.0f && std::floor(v) == v, std::string("checkpoint: bad ") + what, ErrorCode::kFormat);
  return static_cast<std::size_t>(v);
}

LcmConfig config_from_meta(const CheckpointEntry& e) {
  check(e.values.size() == kMetaFields, "checkpoint: malformed meta.lcm record", ErrorCode::kFormat);
  const auto& v = e.values;
  LcmConfig c;
  c.transform.N = as_count(v[0], "N");
  c.transform.M = as_count(v[1], "M");
  c.transform.latent_channels = as_count(v[2], "latent_channels");
  c.transform.scales = as_count(v[3], "scales");
  c.transform.map_classes = as_count(v[4], "map_classes");
  c.transform.spade_hidden = as_count(v[5], "spade_hidden");
  c.transform.use_map = v[6] != 0.0f;
  c.slices = as_count(v[7], "slices");
  c.lambda_index = static_cast<std::uint8_t>(as_count(v[8], "lambda_index"));
  c.lambda = v[9];
  return c;
}

}  // namespace

LcmConfig LcmConfig::paper() { return LcmConfig{}; }

LcmConfig LcmConfig::desk() {
  LcmConfig c;
  c.transform = TransformConfig::desk();
  c.slices = 2;
  return c;
}

void LcmConfig::validate() const {
  transform.validate();
  check(slices >= 1 && slices <= transform.M, "lcm config: slice count must be in [1, M]");
  check(support_radius >= 1, "lcm config: support radius must be positive");
}

LcmModel::LcmModel(const LcmConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const TransformConfig& t = config_.transform;
  if (t.use_map) se = SemanticEncoder<float>(t.map_classes, t.spade_hidden, rng);
  ga = AnalysisTransform<float>(t, rng);
  gs = SynthesisTransform<float>(t, rng);
  ha = HyperAnalysis<float>(t, rng);
  hs = HyperSynthesis<float>(t, rng);
  cm = ContextModel<float>(2 * t.M, t.N, SliceLayout(t.M, config_.slices), rng);
  fp = FactorizedPrior<float>(t.M / 2);
}

ParamList<float> LcmModel::params() const {
  ParamList<float> out;
  if (config_.transform.use_map) se.collect("se", out);
  ga.collect("ga", out);
  gs.collect("gs", out);
  ha.collect("ha", out);
  hs.collect("hs", out);
  cm.collect("cm", out);
  fp.collect("fp", out);
  return out;
}

std::vector<Tensor<float>> LcmModel::semantic(std::span<const MapRaster> maps, std::size_t h, std::size_t w) const {
  if (!config_.transform.use_map) return {};
  return semantic_pyramid(se(maps, h, w), config_.transform.scales);
}

std::vector<std::uint8_t> LcmModel::checkpoint_bytes() const {
  std::vector<CheckpointEntry> entries{meta_entry(config_)};
  for (auto& e : to_entries(params())) entries.push_back(std::move(e));
  return serialize_checkpoint(entries);
}

std::uint64_t LcmModel::hash() const { return fnv1a64(checkpoint_bytes()); }

void LcmModel::save(const std::filesystem::path& path) const { write_file(path, checkpoint_bytes()); }

LcmModel LcmModel::from_checkpoint(std::span<const std::uint8_t> bytes) {
  const auto entries = parse_checkpoint(bytes);
  const CheckpointEntry* meta = nullptr;
  for (const auto& e : entries)
    if (e.name == kMetaName) meta = &e;
  if (!meta) fail(ErrorCode::kModelMismatch, "checkpoint is not a latent compression model (no meta.lcm record)");
  LcmModel model(config_from_meta(*meta), 0);
  auto params = model.params();
  load_entries(params, entries);
  return model;
}

LcmModel LcmModel::load(const std::filesystem::path& path) {
  try {
    return from_checkpoint(read_file(path));
  } catch (const Error& e) {
    rethrow_with_stage(e, path.string());
  }
}

}  // namespace magc
