#include "magc/entropy/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "magc/error.hpp"
#include "magc/tensor/tape.hpp"

namespace magc {
namespace {

constexpr double kLikelihoodFloor = 1e-9;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double std_normal_pdf(double t) { return kInvSqrt2Pi * std::exp(-0.5 * t * t); }

}  // namespace

double gaussian_bin_probability(double symbol, double mu, double sigma) {
  const double v = std::abs(symbol - mu);
  const double upper = 0.5 * std::erfc((v - 0.5) / sigma * kInvSqrt2);
  const double lower = 0.5 * std::erfc((v + 0.5) / sigma * kInvSqrt2);
  return upper - lower;
}

double gaussian_bin_bits(double symbol, double mu, double sigma, double p_min) {
  return -std::log2(std::max(gaussian_bin_probability(symbol, mu, sigma), p_min));
}

template <typename T>
Tensor<T> gaussian_bits(const Tensor<T>& x, const Tensor<T>& mu, const Tensor<T>& sigma) {
  check(x.shape() == mu.shape() && x.shape() == sigma.shape(),
        "gaussian_bits: shape mismatch " + shape_str(x.shape()) + " / " + shape_str(mu.shape()) + " / " +
            shape_str(sigma.shape()));
  const std::size_t n = x.numel();
  const bool grad = GradMode::enabled() && (x.requires_grad() || mu.requires_grad() || sigma.requires_grad());
  std::vector<double> d_dx;
  std::vector<double> d_dsigma;
  if (grad) {
    d_dx.resize(n);
    d_dsigma.resize(n);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<double>(sigma.ptr()[i]);
    check(s > 0.0, "gaussian_bits: non-positive scale", ErrorCode::kNumeric);
    const double u = static_cast<double>(x.ptr()[i]) - static_cast<double>(mu.ptr()[i]);
    const double p = std::max(gaussian_bin_probability(u, 0.0, s), kLikelihoodFloor);
    total -= std::log2(p);
    if (grad) {
      const double a = (u + 0.5) / s;
      const double b = (u - 0.5) / s;
      const double pa = std_normal_pdf(a);
      const double pb = std_normal_pdf(b);
      const double dbits_dp = -1.0 / (std::numbers::ln2 * p);
      d_dx[i] = dbits_dp * (pa - pb) / s;
      d_dsigma[i] = dbits_dp * (b * pb - a * pa) / s;
    }
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total));
  out.check_finite("gaussian_bits");
  if (grad) {
    out.set_requires_grad(true);
    tape<T>().record([x, mu, sigma, out, d_dx = std::move(d_dx), d_dsigma = std::move(d_dsigma)]() {
      if (!out.has_grad()) return;
      const double g = static_cast<double>(out.grad()[0]);
      if (x.requires_grad()) {
        T* gx = x.mutable_grad().data();
        for (std::size_t i = 0; i < d_dx.size(); ++i) gx[i] += static_cast<T>(g * d_dx[i]);
      }
      if (mu.requires_grad()) {
        T* gm = mu.mutable_grad().data();
        for (std::size_t i = 0; i < d_dx.size(); ++i) gm[i] -= static_cast<T>(g * d_dx[i]);
      }
      if (sigma.requires_grad()) {
        T* gs = sigma.mutable_grad().data();
        for (std::size_t i = 0; i < d_dsigma.size(); ++i) gs[i] += static_cast<T>(g * d_dsigma[i]);
      }
    });
  }
  return out;
}

template Tensor<float> gaussian_bits<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> gaussian_bits<double>(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);

}  // namespace magc
