#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "magc/entropy/entropy_model.hpp"
#include "magc/transforms/transforms.hpp"

namespace magc {

struct LcmConfig {
  TransformConfig transform;
  std::size_t slices = 4;  // K
  int support_radius = 64;
  std::uint8_t lambda_index = 0;
  double lambda = 0.0;

  static LcmConfig paper();
  static LcmConfig desk();
  void validate() const;
};

// The latent compression module: semantic encoder, ga/gs, ha/hs, the
// channel-wise context model and the factorized side-information prior.
class LcmModel {
 public:
  LcmModel(const LcmConfig& config, std::uint64_t seed);

  const LcmConfig& config() const { return config_; }
  LcmConfig& mutable_config() { return config_; }

  // Every tensor under its checkpoint name (se., ga., gs., ha., hs., cm., fp.).
  ParamList<float> params() const;
  // Semantic features for each scale of ga / gs; empty without a map.
  std::vector<Tensor<float>> semantic(std::span<const MapRaster> maps, std::size_t h, std::size_t w) const;

  // "MGWT" bytes: a meta.lcm record with the configuration, then weights.
  std::vector<std::uint8_t> checkpoint_bytes() const;
  // FNV-1a of checkpoint_bytes(), as stored in stream headers.
  std::uint64_t hash() const;

  void save(const std::filesystem::path& path) const;
  static LcmModel from_checkpoint(std::span<const std::uint8_t> bytes);
  static LcmModel load(const std::filesystem::path& path);

  SemanticEncoder<float> se;
  AnalysisTransform<float> ga;
  SynthesisTransform<float> gs;
  HyperAnalysis<float> ha;
  HyperSynthesis<float> hs;
  ContextModel<float> cm;
  FactorizedPrior<float> fp;

 private:
  LcmConfig config_;
};

}  // namespace magc
