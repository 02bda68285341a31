// AArch64 variant with separate vmulq/vaddq; every lane matches the scalar
// reference bit for bit.

#include "magc/kernels/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

namespace magc::kernels {
namespace {

struct F32x4 {
  using Scalar = float;
  using Vec = float32x4_t;
  static constexpr std::size_t kLanes = 4;
  static Vec load(const float* p) { return vld1q_f32(p); }
  static void store(float* p, Vec v) { vst1q_f32(p, v); }
  static Vec splat(float x) { return vdupq_n_f32(x); }
  static Vec add(Vec a, Vec b) { return vaddq_f32(a, b); }
  static Vec sub(Vec a, Vec b) { return vsubq_f32(a, b); }
  static Vec mul(Vec a, Vec b) { return vmulq_f32(a, b); }
  static Vec div(Vec a, Vec b) { return vdivq_f32(a, b); }
  static Vec sqrt(Vec a) { return vsqrtq_f32(a); }
};

struct F64x2 {
  using Scalar = double;
  using Vec = float64x2_t;
  static constexpr std::size_t kLanes = 2;
  static Vec load(const double* p) { return vld1q_f64(p); }
  static void store(double* p, Vec v) { vst1q_f64(p, v); }
  static Vec splat(double x) { return vdupq_n_f64(x); }
  static Vec add(Vec a, Vec b) { return vaddq_f64(a, b); }
  static Vec sub(Vec a, Vec b) { return vsubq_f64(a, b); }
  static Vec mul(Vec a, Vec b) { return vmulq_f64(a, b); }
  static Vec div(Vec a, Vec b) { return vdivq_f64(a, b); }
  static Vec sqrt(Vec a) { return vsqrtq_f64(a); }
};

template <typename V, int R, int NV>
inline void gemm_block(std::size_t k, const typename V::Scalar* a,
                       std::size_t lda, const typename V::Scalar* b,
                       std::size_t ldb, typename V::Scalar* c,
                       std::size_t ldc) {
  typename V::Vec acc[R][NV];
  for (int r = 0; r < R; ++r)
    for (int v = 0; v < NV; ++v) acc[r][v] = V::load(c + r * ldc + v * V::kLanes);
  for (std::size_t p = 0; p < k; ++p) {
    typename V::Vec bv[NV];
    for (int v = 0; v < NV; ++v) bv[v] = V::load(b + p * ldb + v * V::kLanes);
    for (int r = 0; r < R; ++r) {
      const auto av = V::splat(a[r * lda + p]);
      for (int v = 0; v < NV; ++v) acc[r][v] = V::add(acc[r][v], V::mul(av, bv[v]));
    }
  }
  for (int r = 0; r < R; ++r)
    for (int v = 0; v < NV; ++v) V::store(c + r * ldc + v * V::kLanes, acc[r][v]);
}

template <typename V, int R>
inline void gemm_rows(std::size_t n, std::size_t k, const typename V::Scalar* a,
                      std::size_t lda, const typename V::Scalar* b,
                      std::size_t ldb, typename V::Scalar* c,
                      std::size_t ldc) {
  constexpr std::size_t kWide = 2 * V::kLanes;
  std::size_t j = 0;
  for (; j + kWide <= n; j += kWide) gemm_block<V, R, 2>(k, a, lda, b + j, ldb, c + j, ldc);
  for (; j + V::kLanes <= n; j += V::kLanes) gemm_block<V, R, 1>(k, a, lda, b + j, ldb, c + j, ldc);
  for (; j < n; ++j) {
    for (int r = 0; r < R; ++r) {
      auto acc = c[r * ldc + j];
      for (std::size_t p = 0; p < k; ++p) acc = acc + a[r * lda + p] * b[p * ldb + j];
      c[r * ldc + j] = acc;
    }
  }
}

template <typename V>
void gemm_simd(std::size_t m, std::size_t n, std::size_t k,
               const typename V::Scalar* a, std::size_t lda,
               const typename V::Scalar* b, std::size_t ldb,
               typename V::Scalar* c, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) gemm_rows<V, 4>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc);
  for (; i < m; ++i) gemm_rows<V, 1>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc);
}

template <typename V>
void axpy_simd(std::size_t n, typename V::Scalar alpha,
               const typename V::Scalar* x, typename V::Scalar* y) {
  const auto av = V::splat(alpha);
  std::size_t i = 0;
  for (; i + V::kLanes <= n; i += V::kLanes)
    V::store(y + i, V::add(V::load(y + i), V::mul(av, V::load(x + i))));
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

template <typename V>
void adam_simd(std::size_t n, typename V::Scalar* p,
               const typename V::Scalar* g, typename V::Scalar* m,
               typename V::Scalar* v,
               const AdamCoeffs<typename V::Scalar>& c) {
  const auto lr = V::splat(c.lr), lr_decay = V::splat(c.lr_decay);
  const auto b1 = V::splat(c.beta1), omb1 = V::splat(c.one_minus_beta1);
  const auto b2 = V::splat(c.beta2), omb2 = V::splat(c.one_minus_beta2);
  const auto ib1 = V::splat(c.inv_bias1), ib2 = V::splat(c.inv_bias2);
  const auto eps = V::splat(c.eps);
  std::size_t i = 0;
  for (; i + V::kLanes <= n; i += V::kLanes) {
    const auto pi = V::load(p + i);
    auto w = V::sub(pi, V::mul(lr_decay, pi));
    const auto gi = V::load(g + i);
    const auto mi = V::add(V::mul(b1, V::load(m + i)), V::mul(omb1, gi));
    const auto vi = V::add(V::mul(b2, V::load(v + i)), V::mul(omb2, V::mul(gi, gi)));
    V::store(m + i, mi);
    V::store(v + i, vi);
    const auto num = V::mul(lr, V::mul(mi, ib1));
    const auto den = V::add(V::sqrt(V::mul(vi, ib2)), eps);
    w = V::sub(w, V::div(num, den));
    V::store(p + i, w);
  }
  if (i < n) {
    if constexpr (sizeof(typename V::Scalar) == 4) {
      detail::scalar_impl().adam_f32(n - i, p + i, g + i, m + i, v + i, c);
    } else {
      detail::scalar_impl().adam_f64(n - i, p + i, g + i, m + i, v + i, c);
    }
  }
}

const KernelTable kNeon = {
    Isa::kNeon,
    &gemm_simd<F32x4>,
    &gemm_simd<F64x2>,
    &axpy_simd<F32x4>,
    &axpy_simd<F64x2>,
    &adam_simd<F32x4>,
    &adam_simd<F64x2>,
};

}  // namespace

namespace detail {
const KernelTable* neon_impl() { return &kNeon; }
}  // namespace detail

}  // namespace magc::kernels

#else

namespace magc::kernels::detail {
const KernelTable* neon_impl() { return nullptr; }
}  // namespace magc::kernels::detail

#endif
