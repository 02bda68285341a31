#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "magc/io/image.hpp"
#include "magc/transforms/map_raster.hpp"

namespace magc {

// Returned by psnr() for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double mean_squared_error(const Image& a, const Image& b);
// 10 * log10(1 / MSE) for data in [0, 1].
double psnr(const Image& a, const Image& b);

// Square f x f windows: the aligned grid, then a grid shifted by f / 2 in
// both directions that stays inside the image.
struct PatchWindow {
  std::size_t x = 0;
  std::size_t y = 0;
  bool shifted = false;
};

std::vector<PatchWindow> patch_windows(std::size_t width, std::size_t height, std::size_t f);
std::size_t patch_count(std::size_t width, std::size_t height, std::size_t f);
std::vector<Image> extract_patches(const Image& image, std::size_t f);

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);
  // Accumulates one pair of same-sized rasters.
  void add(const MapRaster& pred, const MapRaster& gt);
  std::size_t classes() const { return classes_; }
  std::uint64_t count(std::size_t pred, std::size_t gt) const { return counts_[pred * classes_ + gt]; }
  std::uint64_t total() const;
  // Intersection over union of class c; NaN when c appears in neither.
  double iou(std::size_t c) const;
  // Mean IoU over classes present in prediction or ground truth.
  double miou() const;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;  // row = predicted, column = ground truth
};

double miou(const MapRaster& pred, const MapRaster& gt);

struct RDPoint {
  double bpp = 0.0;
  double quality = 0.0;
};

// Rate-quality curve; CSV form is a "bpp,quality" header and one row per
// point.
struct RDCurve {
  std::string label = "quality";
  std::vector<RDPoint> points;

  // At least 4 points with strictly increasing positive bpp.
  void validate() const;
  static RDCurve load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;
};

enum class BdMethod {
  kCubic,  // least-squares cubic over log10(bpp)
  kPchip,  // piecewise cubic Hermite interpolation
};

// Mean quality difference (test minus anchor) over the overlapping
// log10(bpp) interval. Curves whose quality is not monotone in bpp are
// accepted; a note is appended to |warnings| when given.
double bd_quality(const RDCurve& anchor, const RDCurve& test, BdMethod method = BdMethod::kCubic,
                  std::vector<std::string>* warnings = nullptr);
// Mean rate change in percent at equal quality.
double bd_rate(const RDCurve& anchor, const RDCurve& test, BdMethod method = BdMethod::kCubic,
               std::vector<std::string>* warnings = nullptr);

// Spearman rank correlation with average ranks for ties; NaN when either
// input is constant.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace magc
