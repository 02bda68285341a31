#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "magc/io/image.hpp"
#include "magc/rng.hpp"

namespace magc {

struct DatasetPair {
  std::filesystem::path image;  // relative to the manifest's root
  std::filesystem::path map;
};

// Text manifest: key=value lines (root, split, seed, num_classes) and one
// "pair=<image> <map>" line per sample.
struct DatasetManifest {
  std::filesystem::path root;  // absolute after load
  std::string split = "train";
  std::uint64_t seed = 0;
  std::size_t num_classes = 4;
  std::vector<DatasetPair> pairs;

  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct Sample {
  Image image;
  MapRaster map;
};

// Reads every pair; throws if a file is missing (listing all missing
// paths) or a map's size differs from its image.
std::vector<Sample> load_samples(const DatasetManifest& manifest);

// Procedural stand-in for paired imagery and vector maps. Classes:
// 0 background, 1 building, 2 road, 3 water, 4..7 extra land-cover patches.
struct SyntheticSceneSpec {
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t num_classes = 4;
  std::size_t buildings_min = 2, buildings_max = 6;
  double building_size_min = 0.08, building_size_max = 0.25;  // fraction of the short side
  std::size_t roads_min = 1, roads_max = 2;
  double road_width_min = 0.04, road_width_max = 0.09;
  std::size_t water_min = 0, water_max = 1;
  double water_radius_min = 0.12, water_radius_max = 0.3;
  std::size_t extras_min = 1, extras_max = 3;  // per extra class
  double noise_sigma = 0.03;
  bool blur = true;
  std::uint64_t seed = 42;

  void validate() const;
};

Sample generate_scene(const SyntheticSceneSpec& spec, Rng& rng);

// Writes n pairs as images/NNNN.ppm and maps/NNNN.pgm plus manifest.txt.
DatasetManifest gen_data(const SyntheticSceneSpec& spec, std::size_t n_pairs, const std::filesystem::path& out_dir,
                         const std::string& split = "train");

}  // namespace magc
