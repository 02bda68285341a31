#include "magc/eval/evalkit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "magc/error.hpp"
#include "magc/io/bytes.hpp"

namespace magc {
namespace {

// Three-point Gauss-Legendre rule, exact for polynomials up to degree 5.
template <typename F>
double integrate_cubic(const F& f, double a, double b) {
  if (b <= a) return 0.0;
  static const double kNode = std::sqrt(0.6);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  return half * (5.0 / 9.0 * f(mid - half * kNode) + 8.0 / 9.0 * f(mid) + 5.0 / 9.0 * f(mid + half * kNode));
}

// Integral of a least-squares cubic through (x, y) over [a, b].
double cubic_integral(std::span<const double> x, std::span<const double> y, double a, double b) {
  const Eigen::Index n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd V(n, 4);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    V(i, 0) = 1.0;
    V(i, 1) = x[i];
    V(i, 2) = x[i] * x[i];
    V(i, 3) = x[i] * x[i] * x[i];
    rhs(i) = y[i];
  }
  const Eigen::Vector4d c = V.colPivHouseholderQr().solve(rhs);
  auto antiderivative = [&](double t) {
    return t * (c(0) + t * (c(1) / 2 + t * (c(2) / 3 + t * c(3) / 4)));
  };
  return antiderivative(b) - antiderivative(a);
}

// Fritsch-Carlson monotone slopes for strictly increasing x.
std::vector<double> pchip_slopes(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  std::vector<double> h(n - 1), delta(n - 1), d(n, 0.0);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    h[k] = x[k + 1] - x[k];
    delta[k] = (y[k + 1] - y[k]) / h[k];
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (delta[k - 1] * delta[k] > 0) {
      const double w1 = 2 * h[k] + h[k - 1], w2 = h[k] + 2 * h[k - 1];
      d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
    }
  }
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s * d0 <= 0) {
      s = 0;
    } else if (d0 * d1 < 0 && std::abs(s) > std::abs(3 * d0)) {
      s = 3 * d0;
    }
    return s;
  };
  if (n == 2) {
    d[0] = d[1] = delta[0];
  } else {
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }
  return d;
}

double pchip_integral(std::span<const double> x, std::span<const double> y, double a, double b) {
  const std::vector<double> d = pchip_slopes(x, y);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < x.size(); ++k) {
    const double lo = std::max(a, x[k]), hi = std::min(b, x[k + 1]);
    if (hi <= lo) continue;
    const double h = x[k + 1] - x[k];
    auto segment = [&](double t) {
      const double s = (t - x[k]) / h;
      const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
      const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
      return h00 * y[k] + h10 * h * d[k] + h01 * y[k + 1] + h11 * h * d[k + 1];
    };
    total += integrate_cubic(segment, lo, hi);
  }
  return total;
}

struct Series {
  std::vector<double> x, y;
};

// Points sorted by x; duplicate x values are rejected.
Series sorted_series(std::vector<double> x, std::vector<double> y, const char* what) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  Series s;
  for (std::size_t i : order) {
    if (!s.x.empty()) check(x[i] > s.x.back(), std::string("bd: repeated ") + what + " value");
    s.x.push_back(x[i]);
    s.y.push_back(y[i]);
  }
  return s;
}

double integral(const Series& s, double a, double b, BdMethod method) {
  return method == BdMethod::kCubic ? cubic_integral(s.x, s.y, a, b) : pchip_integral(s.x, s.y, a, b);
}

void note_monotonicity(const RDCurve& c, const char* role, std::vector<std::string>* warnings) {
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    if (c.points[i].quality < c.points[i - 1].quality) {
      if (warnings) warnings->push_back(std::string(role) + " curve quality is not monotone in bpp");
      return;
    }
  }
}

// Mean of (test - anchor) over the overlap of their x ranges.
double mean_difference(const Series& anchor, const Series& test, BdMethod method) {
  const double lo = std::max(anchor.x.front(), test.x.front());
  const double hi = std::min(anchor.x.back(), test.x.back());
  check(hi > lo, "bd: the two curves do not overlap");
  return (integral(test, lo, hi, method) - integral(anchor, lo, hi, method)) / (hi - lo);
}

std::vector<double> log_rates(const RDCurve& c) {
  std::vector<double> out;
  for (const RDPoint& p : c.points) out.push_back(std::log10(p.bpp));
  return out;
}

std::vector<double> qualities(const RDCurve& c) {
  std::vector<double> out;
  for (const RDPoint& p : c.points) out.push_back(p.quality);
  return out;
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double mean_squared_error(const Image& a, const Image& b) {
  check(a.width == b.width && a.height == b.height && a.data.size() == b.data.size(),
        "psnr: image sizes differ (" + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
            std::to_string(b.width) + "x" + std::to_string(b.height) + ")");
  check(!a.data.empty(), "psnr: empty images");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = double(a.data[i]) - double(b.data[i]);
    sum += d * d;
  }
  return sum / double(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mean_squared_error(a, b);
  return m == 0.0 ? kPsnrIdentical : -10.0 * std::log10(m);
}

std::vector<PatchWindow> patch_windows(std::size_t width, std::size_t height, std::size_t f) {
  check(f >= 2 && f <= std::min(width, height), "extract_patches: patch size " + std::to_string(f) +
                                                    " must be in [2, min(H, W)]");
  const std::size_t nx = width / f, ny = height / f;
  std::vector<PatchWindow> out;
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) out.push_back({i * f, j * f, false});
  for (std::size_t j = 0; j + 1 < ny; ++j)
    for (std::size_t i = 0; i + 1 < nx; ++i) out.push_back({f / 2 + i * f, f / 2 + j * f, true});
  return out;
}

std::size_t patch_count(std::size_t width, std::size_t height, std::size_t f) {
  return patch_windows(width, height, f).size();
}

std::vector<Image> extract_patches(const Image& image, std::size_t f) {
  std::vector<Image> out;
  for (const PatchWindow& w : patch_windows(image.width, image.height, f)) {
    Image p(f, f);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < f; ++y)
        for (std::size_t x = 0; x < f; ++x) p.at(c, y, x) = image.at(c, w.y + y, w.x + x);
    out.push_back(std::move(p));
  }
  return out;
}

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
  check(classes >= 1, "confusion matrix: need at least one class");
}

void ConfusionMatrix::add(const MapRaster& pred, const MapRaster& gt) {
  check(pred.width == gt.width && pred.height == gt.height,
        "miou: raster sizes differ (" + std::to_string(pred.width) + "x" + std::to_string(pred.height) + " vs " +
            std::to_string(gt.width) + "x" + std::to_string(gt.height) + ")");
  check(pred.classes.size() == pred.width * pred.height && gt.classes.size() == gt.width * gt.height,
        "miou: incomplete raster", ErrorCode::kFormat);
  for (std::size_t i = 0; i < pred.classes.size(); ++i) {
    const std::size_t p = pred.classes[i], g = gt.classes[i];
    check(p < classes_ && g < classes_, "miou: class id outside [0, " + std::to_string(classes_) + ")",
          ErrorCode::kFormat);
    ++counts_[p * classes_ + g];
  }
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

double ConfusionMatrix::iou(std::size_t c) const {
  std::uint64_t pred = 0, gt = 0;
  for (std::size_t k = 0; k < classes_; ++k) {
    pred += count(c, k);
    gt += count(k, c);
  }
  const std::uint64_t inter = count(c, c);
  const std::uint64_t uni = pred + gt - inter;
  return uni == 0 ? std::numeric_limits<double>::quiet_NaN() : double(inter) / double(uni);
}

double ConfusionMatrix::miou() const {
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes_; ++c) {
    const double v = iou(c);
    if (std::isnan(v)) continue;
    sum += v;
    ++present;
  }
  return present == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / double(present);
}

double miou(const MapRaster& pred, const MapRaster& gt) {
  std::size_t classes = std::max<std::size_t>({pred.num_classes, gt.num_classes, 1});
  for (std::uint8_t v : pred.classes) classes = std::max<std::size_t>(classes, std::size_t(v) + 1);
  for (std::uint8_t v : gt.classes) classes = std::max<std::size_t>(classes, std::size_t(v) + 1);
  ConfusionMatrix cm(classes);
  cm.add(pred, gt);
  return cm.miou();
}

void RDCurve::validate() const {
  check(points.size() >= 4, "rd curve '" + label + "': need at least 4 points, got " + std::to_string(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    check(std::isfinite(points[i].bpp) && points[i].bpp > 0 && std::isfinite(points[i].quality),
          "rd curve '" + label + "': bpp must be positive and values finite");
    if (i > 0) check(points[i].bpp > points[i - 1].bpp, "rd curve '" + label + "': bpp must be strictly increasing");
  }
}

RDCurve RDCurve::load_csv(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  RDCurve c;
  c.label = path.stem().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line_no == 1 && line.find_first_not_of("0123456789+-.eE, \t") != std::string::npos) continue;
    const auto comma = line.find(',');
    RDPoint p;
    try {
      check(comma != std::string::npos, "");
      std::size_t used = 0;
      p.bpp = std::stod(line.substr(0, comma), &used);
      p.quality = std::stod(line.substr(comma + 1), &used);
    } catch (const std::exception&) {
      fail(ErrorCode::kFormat, path.string() + ":" + std::to_string(line_no) + ": expected 'bpp,quality'");
    }
    c.points.push_back(p);
  }
  return c;
}

void RDCurve::save_csv(const std::filesystem::path& path) const {
  std::string out = "bpp,quality\n";
  char buf[64];
  for (const RDPoint& p : points) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", p.bpp, p.quality);
    out += buf;
  }
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(out.data()), out.size()));
}

double bd_quality(const RDCurve& anchor, const RDCurve& test, BdMethod method, std::vector<std::string>* warnings) {
  anchor.validate();
  test.validate();
  note_monotonicity(anchor, "anchor", warnings);
  note_monotonicity(test, "test", warnings);
  return mean_difference(sorted_series(log_rates(anchor), qualities(anchor), "bpp"),
                         sorted_series(log_rates(test), qualities(test), "bpp"), method);
}

double bd_rate(const RDCurve& anchor, const RDCurve& test, BdMethod method, std::vector<std::string>* warnings) {
  anchor.validate();
  test.validate();
  note_monotonicity(anchor, "anchor", warnings);
  note_monotonicity(test, "test", warnings);
  const double avg = mean_difference(sorted_series(qualities(anchor), log_rates(anchor), "quality"),
                                     sorted_series(qualities(test), log_rates(test), "quality"), method);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  check(a.size() == b.size() && a.size() >= 2, "spearman: need two equally long series of length >= 2");
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = double(a.size());
  const double mean = (n + 1.0) / 2.0;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - mean) * (rb[i] - mean);
    va += (ra[i] - mean) * (ra[i] - mean);
    vb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (va == 0 || vb == 0) return std::numeric_limits<double>::quiet_NaN();
  return cov / std::sqrt(va * vb);
}

}  // namespace magc
