#include "magc/io/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "magc/error.hpp"
#include "magc/io/bytes.hpp"
#include "magc/io/kv_config.hpp"

namespace magc {
namespace {

namespace fs = std::filesystem;

constexpr std::size_t kMaxClasses = 8;

// Base colors: background, building, road, water, then extra land cover.
constexpr std::array<std::array<float, 3>, kMaxClasses> kPalette{{
    {0.42f, 0.50f, 0.30f},
    {0.78f, 0.72f, 0.66f},
    {0.30f, 0.30f, 0.33f},
    {0.14f, 0.30f, 0.55f},
    {0.22f, 0.42f, 0.18f},
    {0.68f, 0.60f, 0.36f},
    {0.55f, 0.35f, 0.30f},
    {0.60f, 0.62f, 0.70f},
}};

struct Canvas {
  const SyntheticSceneSpec& spec;
  MapRaster map;
  Image color;

  void paint(std::size_t y, std::size_t x, std::uint8_t cls, const std::array<float, 3>& rgb) {
    map.at(y, x) = cls;
    for (std::size_t c = 0; c < 3; ++c) color.at(c, y, x) = rgb[c];
  }
};

std::array<float, 3> jittered(std::uint8_t cls, Rng& rng) {
  std::array<float, 3> rgb = kPalette[cls];
  for (float& v : rgb) v = static_cast<float>(std::clamp(v + rng.uniform(-0.04, 0.04), 0.0, 1.0));
  return rgb;
}

std::size_t count_between(std::size_t lo, std::size_t hi, Rng& rng) { return lo + rng.below(hi - lo + 1); }

void draw_rect(Canvas& cv, std::uint8_t cls, double size_min, double size_max, Rng& rng) {
  const double short_side = static_cast<double>(std::min(cv.map.width, cv.map.height));
  const auto w = std::max<std::size_t>(2, static_cast<std::size_t>(rng.uniform(size_min, size_max) * short_side));
  const auto h = std::max<std::size_t>(2, static_cast<std::size_t>(rng.uniform(size_min, size_max) * short_side));
  const std::size_t x0 = rng.below(cv.map.width), y0 = rng.below(cv.map.height);
  const auto rgb = jittered(cls, rng);
  for (std::size_t y = y0; y < std::min(y0 + h, cv.map.height); ++y)
    for (std::size_t x = x0; x < std::min(x0 + w, cv.map.width); ++x) cv.paint(y, x, cls, rgb);
}

void draw_ellipse(Canvas& cv, std::uint8_t cls, double r_min, double r_max, Rng& rng) {
  const double short_side = static_cast<double>(std::min(cv.map.width, cv.map.height));
  const double rx = rng.uniform(r_min, r_max) * short_side;
  const double ry = rng.uniform(r_min, r_max) * short_side;
  const double cx = rng.uniform(0, double(cv.map.width)), cy = rng.uniform(0, double(cv.map.height));
  const double angle = rng.uniform(0, std::numbers::pi);
  const double ca = std::cos(angle), sa = std::sin(angle);
  const auto rgb = jittered(cls, rng);
  for (std::size_t y = 0; y < cv.map.height; ++y) {
    for (std::size_t x = 0; x < cv.map.width; ++x) {
      const double dx = double(x) + 0.5 - cx, dy = double(y) + 0.5 - cy;
      const double u = (dx * ca + dy * sa) / rx, v = (-dx * sa + dy * ca) / ry;
      if (u * u + v * v <= 1.0) cv.paint(y, x, cls, rgb);
    }
  }
}

void draw_road(Canvas& cv, std::uint8_t cls, Rng& rng) {
  const SyntheticSceneSpec& s = cv.spec;
  const double short_side = static_cast<double>(std::min(cv.map.width, cv.map.height));
  const double half = 0.5 * std::max(1.5, rng.uniform(s.road_width_min, s.road_width_max) * short_side);
  const double px = rng.uniform(0, double(cv.map.width)), py = rng.uniform(0, double(cv.map.height));
  // Mostly axis-aligned, like street grids, with occasional diagonals.
  double angle = rng.below(2) == 0 ? 0.0 : std::numbers::pi / 2;
  if (rng.uniform() < 0.3) angle = rng.uniform(0, std::numbers::pi);
  const double nx = -std::sin(angle), ny = std::cos(angle);
  const auto rgb = jittered(cls, rng);
  for (std::size_t y = 0; y < cv.map.height; ++y)
    for (std::size_t x = 0; x < cv.map.width; ++x)
      if (std::abs((double(x) + 0.5 - px) * nx + (double(y) + 0.5 - py) * ny) <= half) cv.paint(y, x, cls, rgb);
}

Image box_blur3(const Image& in) {
  Image out(in.width, in.height);
  const long w = static_cast<long>(in.width), h = static_cast<long>(in.height);
  for (std::size_t c = 0; c < 3; ++c) {
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        float acc = 0.0f;
        for (long dy = -1; dy <= 1; ++dy)
          for (long dx = -1; dx <= 1; ++dx)
            acc += in.at(c, std::clamp(y + dy, 0L, h - 1), std::clamp(x + dx, 0L, w - 1));
        out.at(c, y, x) = acc / 9.0f;
      }
    }
  }
  return out;
}

std::string numbered(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu.%s", i, ext);
  return buf;
}

}  // namespace

DatasetManifest DatasetManifest::load(const fs::path& path) {
  const auto bytes = read_file(path);
  const std::string text(bytes.begin(), bytes.end());
  DatasetManifest m;
  KvConfig kv;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.rfind("pair=", 0) == 0) {
      std::istringstream fields(line.substr(5));
      DatasetPair p;
      std::string img, map;
      if (!(fields >> img >> map)) {
        fail(ErrorCode::kFormat, path.string() + ":" + std::to_string(line_no) + ": expected 'pair=<image> <map>'");
      }
      m.pairs.push_back({img, map});
    } else {
      const KvConfig one = KvConfig::parse(line, path.string() + ":" + std::to_string(line_no));
      for (const auto& [k, v] : one.values()) kv.set(k, v);
    }
  }
  m.root = fs::absolute(path).parent_path() / kv.get("root", ".");
  m.split = kv.get("split", "train");
  m.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  m.num_classes = static_cast<std::size_t>(kv.get_int("num_classes", 4));
  check(m.num_classes >= 1 && m.num_classes <= kMaxClasses, path.string() + ": num_classes must be in [1, 8]",
        ErrorCode::kFormat);
  return m;
}

void DatasetManifest::save(const fs::path& path) const {
  std::ostringstream out;
  out << "root=.\n"
      << "split=" << split << "\n"
      << "seed=" << seed << "\n"
      << "num_classes=" << num_classes << "\n";
  for (const DatasetPair& p : pairs) out << "pair=" << p.image.generic_string() << ' ' << p.map.generic_string() << '\n';
  const std::string s = out.str();
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

std::vector<Sample> load_samples(const DatasetManifest& manifest) {
  std::vector<std::string> missing;
  for (const DatasetPair& p : manifest.pairs) {
    for (const fs::path& f : {manifest.root / p.image, manifest.root / p.map})
      if (!fs::exists(f)) missing.push_back(f.string());
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    fail(ErrorCode::kIo, "dataset: missing files:" + list);
  }
  std::vector<Sample> out;
  out.reserve(manifest.pairs.size());
  for (const DatasetPair& p : manifest.pairs) {
    Sample s{read_ppm(manifest.root / p.image), read_map(manifest.root / p.map, manifest.num_classes)};
    check(s.map.width == s.image.width && s.map.height == s.image.height,
          "dataset: " + p.map.string() + " does not match the size of " + p.image.string(), ErrorCode::kFormat);
    out.push_back(std::move(s));
  }
  return out;
}

void SyntheticSceneSpec::validate() const {
  check(width >= 4 && height >= 4, "scene spec: canvas too small");
  check(num_classes >= 1 && num_classes <= kMaxClasses, "scene spec: class count must be in [1, 8]");
  check(buildings_min <= buildings_max && roads_min <= roads_max && water_min <= water_max && extras_min <= extras_max,
        "scene spec: count ranges must be ordered");
  check(building_size_min > 0 && building_size_min <= building_size_max && road_width_min > 0 &&
            road_width_min <= road_width_max && water_radius_min > 0 && water_radius_min <= water_radius_max,
        "scene spec: size ranges must be positive and ordered");
  check(noise_sigma >= 0, "scene spec: noise sigma must be non-negative");
}

Sample generate_scene(const SyntheticSceneSpec& spec, Rng& rng) {
  spec.validate();
  Canvas cv{spec, MapRaster(spec.width, spec.height, spec.num_classes), Image(spec.width, spec.height)};
  const auto background = jittered(0, rng);
  for (std::size_t y = 0; y < spec.height; ++y)
    for (std::size_t x = 0; x < spec.width; ++x) cv.paint(y, x, 0, background);

  for (std::size_t cls = 4; cls < spec.num_classes; ++cls) {
    const std::size_t n = count_between(spec.extras_min, spec.extras_max, rng);
    for (std::size_t i = 0; i < n; ++i) {
      if (rng.below(2) == 0) {
        draw_rect(cv, static_cast<std::uint8_t>(cls), spec.building_size_max, 2 * spec.building_size_max, rng);
      } else {
        draw_ellipse(cv, static_cast<std::uint8_t>(cls), spec.water_radius_min, spec.water_radius_max, rng);
      }
    }
  }
  if (spec.num_classes > 3) {
    const std::size_t n = count_between(spec.water_min, spec.water_max, rng);
    for (std::size_t i = 0; i < n; ++i) draw_ellipse(cv, 3, spec.water_radius_min, spec.water_radius_max, rng);
  }
  if (spec.num_classes > 2) {
    const std::size_t n = count_between(spec.roads_min, spec.roads_max, rng);
    for (std::size_t i = 0; i < n; ++i) draw_road(cv, 2, rng);
  }
  if (spec.num_classes > 1) {
    const std::size_t n = count_between(spec.buildings_min, spec.buildings_max, rng);
    for (std::size_t i = 0; i < n; ++i) draw_rect(cv, 1, spec.building_size_min, spec.building_size_max, rng);
  }

  for (float& v : cv.color.data) v += static_cast<float>(spec.noise_sigma * rng.normal());
  Image img = spec.blur ? box_blur3(cv.color) : cv.color;
  for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  return {quantize8(img), std::move(cv.map)};
}

DatasetManifest gen_data(const SyntheticSceneSpec& spec, std::size_t n_pairs, const fs::path& out_dir,
                         const std::string& split) {
  spec.validate();
  DatasetManifest m;
  m.root = out_dir;
  m.split = split;
  m.seed = spec.seed;
  m.num_classes = spec.num_classes;
  Rng rng(spec.seed);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const Sample s = generate_scene(spec, rng);
    DatasetPair p{fs::path("images") / numbered(i, "ppm"), fs::path("maps") / numbered(i, "pgm")};
    write_ppm(out_dir / p.image, s.image);
    write_map(out_dir / p.map, s.map);
    m.pairs.push_back(std::move(p));
  }
  m.save(out_dir / "manifest.txt");
  return m;
}

}  // namespace magc
