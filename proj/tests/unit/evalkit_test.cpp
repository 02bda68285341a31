#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "magc/error.hpp"
#include "magc/eval/evalkit.hpp"
#include "magc/rng.hpp"

namespace magc {
namespace {

// Oracles evaluated with mpmath at 30 digits.
constexpr double kBdCubicOracle = 0.874826755561503767036;
constexpr double kBdRateLogOracle = -43.7658674809650919605;

RDCurve curve(std::initializer_list<double> rates, double (*q)(double)) {
  RDCurve c;
  for (double r : rates) c.points.push_back({r, q(std::log10(r))});
  return c;
}

TEST(Psnr, ClosedForms) {
  const Image a(8, 8, 0.5f);
  EXPECT_EQ(psnr(a, a), kPsnrIdentical);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_NEAR(psnr(a, Image(8, 8, 0.6f)), 20.0, 1e-5);
  EXPECT_NEAR(psnr(a, Image(8, 8, 0.51f)), 40.0, 1e-4);
  EXPECT_NEAR(psnr(Image(4, 4, 0.0f), Image(4, 4, 0.5f)), 20 * std::log10(2.0), 1e-12);
  EXPECT_THROW(psnr(a, Image(8, 4)), Error);
}

TEST(Patches, CountsFromTheFormula) {
  EXPECT_EQ(patch_count(256, 256, 128), 5u);
  EXPECT_EQ(4500 * patch_count(256, 256, 128), 22500u);
  EXPECT_EQ(patch_count(128, 128, 128), 1u);
  EXPECT_EQ(patch_count(384, 256, 128), 8u);
  EXPECT_THROW(patch_count(100, 256, 128), Error);
}

TEST(Patches, MatchBruteForceEnumeration) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t f = 2 * (1 + rng.below(20));
    const std::size_t w = f + rng.below(5 * f), h = f + rng.below(5 * f);
    // Every window at a multiple of f/2 inside the aligned grid's extent,
    // offset on both axes by the same parity.
    const std::size_t ew = (w / f) * f, eh = (h / f) * f;
    std::size_t brute = 0;
    for (std::size_t y = 0; y + f <= eh; y += f / 2)
      for (std::size_t x = 0; x + f <= ew; x += f / 2)
        if ((x / (f / 2)) % 2 == (y / (f / 2)) % 2) ++brute;
    ASSERT_EQ(patch_count(w, h, f), brute) << w << "x" << h << " f=" << f;
    ASSERT_EQ(patch_count(w, h, f), (w / f) * (h / f) + (w / f - 1) * (h / f - 1));
  }
}

TEST(Patches, ContentComesFromTheWindow) {
  Image img(8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) img.at(1, y, x) = float(y * 8 + x) / 64.0f;
  const auto patches = extract_patches(img, 4);
  ASSERT_EQ(patches.size(), 5u);
  EXPECT_FLOAT_EQ(patches[1].at(1, 0, 0), 4.0f / 64.0f);
  EXPECT_FLOAT_EQ(patches[4].at(1, 0, 0), float(2 * 8 + 2) / 64.0f);
  EXPECT_FLOAT_EQ(patches[4].at(1, 3, 3), float(5 * 8 + 5) / 64.0f);
}

TEST(Miou, HandComputedCases) {
  MapRaster gt(4, 4, 2);
  EXPECT_NEAR(miou(gt, gt), 1.0, 1e-12);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 2; x < 4; ++x) gt.at(y, x) = 1;
  EXPECT_NEAR(miou(gt, gt), 1.0, 1e-12);
  const MapRaster pred(4, 4, 2);
  EXPECT_NEAR(miou(pred, gt), 0.25, 1e-12);
  MapRaster flipped = gt;
  for (auto& v : flipped.classes) v = static_cast<std::uint8_t>(1 - v);
  EXPECT_NEAR(miou(flipped, gt), 0.0, 1e-12);
  EXPECT_THROW(miou(MapRaster(3, 4, 2), gt), Error);
}

TEST(Miou, ConfusionMatrixBookkeeping) {
  Rng rng(4);
  MapRaster a(16, 8, 5), b(16, 8, 5);
  for (auto& v : a.classes) v = static_cast<std::uint8_t>(rng.below(5));
  for (auto& v : b.classes) v = static_cast<std::uint8_t>(rng.below(5));
  ConfusionMatrix cm(5);
  cm.add(a, b);
  EXPECT_EQ(cm.total(), 128u);
  const double m = cm.miou();
  EXPECT_GE(m, 0.0);
  EXPECT_LE(m, 1.0);
  EXPECT_LT(m, 1.0);
  EXPECT_TRUE(std::isnan(ConfusionMatrix(3).iou(2)));
}

double log_curve(double x) { return 10.0 * x + 30.0; }
double log_curve_plus(double x) { return 10.0 * x + 32.5; }
double cubic_a(double x) { return 30 + 5 * x - 2 * x * x + 0.5 * x * x * x; }
double cubic_b(double x) { return 31 + 6 * x - x * x; }
double bumpy(double x) { return 30 + 8 * x + 3 * std::sin(4 * x); }
double bumpy_plus_one(double x) { return bumpy(x) + 1.0; }

TEST(Bd, IdenticalCurvesGiveZero) {
  const RDCurve a = curve({0.1, 0.2, 0.4, 0.8, 1.6}, bumpy);
  for (BdMethod m : {BdMethod::kCubic, BdMethod::kPchip}) {
    EXPECT_NEAR(bd_quality(a, a, m), 0.0, 1e-9);
    EXPECT_NEAR(bd_rate(a, a, m), 0.0, 1e-9);
  }
}

TEST(Bd, ConstantOffsetGivesExactlyOne) {
  const RDCurve a = curve({0.1, 0.2, 0.4, 0.8, 1.6}, bumpy);
  const RDCurve b = curve({0.1, 0.2, 0.4, 0.8, 1.6}, bumpy_plus_one);
  EXPECT_NEAR(bd_quality(a, b), 1.0, 1e-12);
  EXPECT_NEAR(bd_quality(a, b, BdMethod::kPchip), 1.0, 1e-12);
}

TEST(Bd, AnalyticOracles) {
  const RDCurve a = curve({0.1, 0.2, 0.4, 0.8}, log_curve);
  const RDCurve b = curve({0.12, 0.25, 0.5, 1.0}, log_curve_plus);
  EXPECT_NEAR(bd_quality(a, b), 2.5, 1e-6);
  EXPECT_NEAR(bd_rate(a, b), kBdRateLogOracle, 1e-6);
  EXPECT_NEAR(bd_quality(a, b, BdMethod::kPchip), 2.5, 1e-6);
  const RDCurve ca = curve({0.1, 0.2, 0.4, 0.8}, cubic_a);
  const RDCurve cb = curve({0.15, 0.3, 0.6, 1.2}, cubic_b);
  EXPECT_NEAR(bd_quality(ca, cb), kBdCubicOracle, 1e-6);
}

TEST(Bd, Antisymmetry) {
  const RDCurve a = curve({0.1, 0.25, 0.4, 0.9, 1.3}, bumpy);
  const RDCurve b = curve({0.15, 0.3, 0.6, 1.2}, cubic_b);
  for (BdMethod m : {BdMethod::kCubic, BdMethod::kPchip})
    EXPECT_NEAR(bd_quality(a, b, m), -bd_quality(b, a, m), 1e-9);
}

TEST(Bd, ErrorsAndWarnings) {
  const RDCurve a = curve({0.1, 0.2, 0.4, 0.8}, log_curve);
  const RDCurve far = curve({2, 3, 4, 5}, log_curve);
  EXPECT_THROW(bd_quality(a, far), Error);
  RDCurve three = a;
  three.points.pop_back();
  EXPECT_THROW(bd_quality(a, three), Error);
  RDCurve dip = a;
  dip.points[2].quality = 10;
  std::vector<std::string> warnings;
  EXPECT_NO_THROW(bd_quality(a, dip, BdMethod::kCubic, &warnings));
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(RdCurve, CsvRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "magc_test_curve.csv";
  const RDCurve a = curve({0.1, 0.2, 0.4, 0.8}, bumpy);
  a.save_csv(path);
  const RDCurve b = RDCurve::load_csv(path);
  ASSERT_EQ(b.points.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(b.points[i].bpp, a.points[i].bpp, 1e-9);
    EXPECT_NEAR(b.points[i].quality, a.points[i].quality, 1e-7);
  }
  std::filesystem::remove(path);
}

TEST(Spearman, RanksWithTies) {
  const double x[] = {1, 2, 3, 4};
  const double up[] = {10, 20, 30, 40};
  const double down[] = {4, 3, 2, 1};
  const double tied[] = {1, 1, 2, 2};
  EXPECT_NEAR(spearman(x, up), 1.0, 1e-12);
  EXPECT_NEAR(spearman(x, down), -1.0, 1e-12);
  EXPECT_NEAR(spearman(x, tied), 2.0 / std::sqrt(5.0), 1e-12);
  const double flat[] = {1, 1, 1, 1};
  EXPECT_TRUE(std::isnan(spearman(x, flat)));
}

}  // namespace
}  // namespace magc
