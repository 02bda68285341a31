#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "magc/error.hpp"
#include "magc/io/bytes.hpp"
#include "magc/io/dataset.hpp"
#include "magc/io/image.hpp"
#include "magc/io/kv_config.hpp"

namespace magc {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("magc_test_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TEST(Ppm, RoundTripsQuantizedImage) {
  Image img(5, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i % 256) / 255.0f;
  const Image back = decode_ppm(encode_ppm(img));
  ASSERT_EQ(back.width, 5u);
  ASSERT_EQ(back.height, 3u);
  EXPECT_EQ(back.data, img.data);
}

TEST(Ppm, AcceptsCommentsAndRejectsWrongMagic) {
  const std::string text = "P6\n# comment\n1 1\n255\n";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  bytes.insert(bytes.end(), {255, 0, 51});
  const Image img = decode_ppm(bytes);
  EXPECT_FLOAT_EQ(img.at(0, 0, 0), 1.0f);
  EXPECT_FLOAT_EQ(img.at(2, 0, 0), 0.2f);
  bytes[1] = '3';
  EXPECT_THROW(decode_ppm(bytes), Error);
}

TEST(Pgm, MapRoundTripAndClassCheck) {
  TempDir dir("pgm");
  MapRaster m(4, 2, 3);
  m.at(1, 3) = 2;
  write_map(dir.path() / "m.pgm", m);
  const MapRaster back = read_map(dir.path() / "m.pgm", 3);
  EXPECT_EQ(back.classes, m.classes);
  try {
    read_map(dir.path() / "m.pgm", 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
  }
}

TEST(KvConfig, ParsesOverridesAndTypes) {
  const KvConfig kv = KvConfig::parse("# c\na = 1\nb=x y\n\na=2.5\nflag=true\n");
  EXPECT_DOUBLE_EQ(kv.get_double("a", 0), 2.5);
  EXPECT_EQ(kv.get("b", ""), "x y");
  EXPECT_TRUE(kv.get_bool("flag", false));
  EXPECT_EQ(kv.get_int("missing", 7), 7);
  EXPECT_THROW(kv.get_int("b", 0), Error);
  EXPECT_THROW(KvConfig::parse("novalue\n"), Error);
}

TEST(Dataset, SameSeedGivesByteIdenticalFiles) {
  TempDir a("gen_a"), b("gen_b");
  SyntheticSceneSpec spec;
  gen_data(spec, 3, a.path());
  gen_data(spec, 3, b.path());
  for (const char* f : {"images/0000.ppm", "images/0002.ppm", "maps/0001.pgm", "manifest.txt"}) {
    EXPECT_EQ(read_file(a.path() / f), read_file(b.path() / f)) << f;
  }
  TempDir c("gen_c");
  spec.seed = 43;
  gen_data(spec, 1, c.path());
  EXPECT_NE(read_file(a.path() / "images/0000.ppm"), read_file(c.path() / "images/0000.ppm"));
}

TEST(Dataset, ManifestLoadsSamplesWithMatchingDims) {
  TempDir dir("manifest");
  SyntheticSceneSpec spec;
  spec.width = 32;
  spec.height = 48;
  gen_data(spec, 4, dir.path(), "val");
  const DatasetManifest m = DatasetManifest::load(dir.path() / "manifest.txt");
  EXPECT_EQ(m.split, "val");
  EXPECT_EQ(m.seed, 42u);
  ASSERT_EQ(m.pairs.size(), 4u);
  for (const Sample& s : load_samples(m)) {
    EXPECT_EQ(s.image.width, 32u);
    EXPECT_EQ(s.image.height, 48u);
    EXPECT_EQ(s.map.width, 32u);
    EXPECT_EQ(s.map.height, 48u);
  }
}

TEST(Dataset, MissingFilesAreAllListed) {
  TempDir dir("missing");
  gen_data(SyntheticSceneSpec{}, 3, dir.path());
  fs::remove(dir.path() / "images/0000.ppm");
  fs::remove(dir.path() / "maps/0002.pgm");
  try {
    load_samples(DatasetManifest::load(dir.path() / "manifest.txt"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("0000.ppm"), std::string::npos);
    EXPECT_NE(msg.find("0002.pgm"), std::string::npos);
  }
}

TEST(Dataset, MapValuesBelowClassCountAndEveryClassAppears) {
  for (std::size_t classes : {4u, 6u}) {
    SyntheticSceneSpec spec;
    spec.num_classes = classes;
    Rng rng(7);
    std::vector<std::size_t> hist(classes, 0);
    for (int i = 0; i < 100; ++i) {
      const Sample s = generate_scene(spec, rng);
      ASSERT_EQ(s.map.width, s.image.width);
      for (std::uint8_t c : s.map.classes) {
        ASSERT_LT(c, classes);
        ++hist[c];
      }
    }
    for (std::size_t c = 0; c < classes; ++c) EXPECT_GT(hist[c], 0u) << "class " << c;
  }
}

TEST(Dataset, ImageColorFollowsClass) {
  SyntheticSceneSpec spec;
  spec.noise_sigma = 0;
  spec.blur = false;
  Rng rng(3);
  const Sample s = generate_scene(spec, rng);
  std::set<std::uint8_t> seen;
  for (std::size_t y = 0; y < s.map.height; ++y)
    for (std::size_t x = 0; x < s.map.width; ++x) seen.insert(s.map.at(y, x));
  EXPECT_GE(seen.size(), 2u);
  for (float v : s.image.data) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Dataset, SpecValidation) {
  SyntheticSceneSpec spec;
  spec.num_classes = 9;
  EXPECT_THROW(spec.validate(), Error);
  spec = {};
  spec.road_width_min = 0;
  EXPECT_THROW(spec.validate(), Error);
  spec = {};
  spec.buildings_min = 7;
  EXPECT_THROW(spec.validate(), Error);
}

}  // namespace
}  // namespace magc
