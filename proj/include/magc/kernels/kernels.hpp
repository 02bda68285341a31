#pragma once

// Data-parallel inner loops shared by the tensor engine.
//
// Every kernel has a scalar reference and optional SIMD variants. The SIMD
// variants vectorize only across independent output elements and evaluate
// each element with the same sequence of IEEE multiplies and adds as the
// scalar loop, so all variants produce bit-identical results. This is what
// lets a stream encoded on an AVX2 machine decode on a scalar one.

#include <cstddef>
#include <string_view>

namespace magc::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

// C[m x n] += A[m x k] * B[k x n], all row-major with leading dimensions.
// Each C element accumulates its k products in increasing k order.
template <typename T>
using GemmFn = void (*)(std::size_t m, std::size_t n, std::size_t k,
                        const T* a, std::size_t lda, const T* b,
                        std::size_t ldb, T* c, std::size_t ldc);

// y[i] += alpha * x[i]
template <typename T>
using AxpyFn = void (*)(std::size_t n, T alpha, const T* x, T* y);

template <typename T>
struct AdamCoeffs {
  T lr;
  T lr_decay;   // lr * weight_decay
  T beta1;
  T one_minus_beta1;
  T beta2;
  T one_minus_beta2;
  T inv_bias1;  // 1 / (1 - beta1^t)
  T inv_bias2;  // 1 / (1 - beta2^t)
  T eps;
};

// Decoupled-weight-decay Adam update over a flat parameter buffer:
//   p -= lr_decay * p
//   m  = beta1 * m + (1 - beta1) * g
//   v  = beta2 * v + (1 - beta2) * g * g
//   p -= (lr * m * inv_bias1) / (sqrt(v * inv_bias2) + eps)
template <typename T>
using AdamFn = void (*)(std::size_t n, T* p, const T* g, T* m, T* v,
                        const AdamCoeffs<T>& c);

struct KernelTable {
  Isa isa;
  GemmFn<float> gemm_f32;
  GemmFn<double> gemm_f64;
  AxpyFn<float> axpy_f32;
  AxpyFn<double> axpy_f64;
  AdamFn<float> adam_f32;
  AdamFn<double> adam_f64;
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Best available table. MAGC_SIMD=scalar|avx2|neon overrides the choice;
// an unavailable override falls back to scalar.
const KernelTable& active();

// Forces a specific table for the rest of the process (tests, benchmarks).
// Returns false and leaves the selection unchanged if |isa| is unavailable.
bool select(Isa isa);

template <typename T>
inline void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a,
                 std::size_t lda, const T* b, std::size_t ldb, T* c,
                 std::size_t ldc) {
  if constexpr (sizeof(T) == 4) {
    active().gemm_f32(m, n, k, a, lda, b, ldb, c, ldc);
  } else {
    active().gemm_f64(m, n, k, a, lda, b, ldb, c, ldc);
  }
}

template <typename T>
inline void axpy(std::size_t n, T alpha, const T* x, T* y) {
  if constexpr (sizeof(T) == 4) {
    active().axpy_f32(n, alpha, x, y);
  } else {
    active().axpy_f64(n, alpha, x, y);
  }
}

template <typename T>
inline void adam(std::size_t n, T* p, const T* g, T* m, T* v,
                 const AdamCoeffs<T>& c) {
  if constexpr (sizeof(T) == 4) {
    active().adam_f32(n, p, g, m, v, c);
  } else {
    active().adam_f64(n, p, g, m, v, c);
  }
}

namespace detail {
// Defined by each variant's translation unit.
const KernelTable& scalar_impl();
const KernelTable* avx2_impl();
const KernelTable* neon_impl();
}  // namespace detail

}  // namespace magc::kernels
