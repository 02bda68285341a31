#include <cmath>

#include "magc/kernels/kernels.hpp"

namespace magc::kernels {
namespace {

// i-p-j loop order keeps B accesses sequential while each C element still
// sees its products in increasing p order.
template <typename T>
void gemm_ref(std::size_t m, std::size_t n, std::size_t k, const T* a,
              std::size_t lda, const T* b, std::size_t ldb, T* c,
              std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * lda + p];
      const T* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

template <typename T>
void axpy_ref(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

template <typename T>
void adam_ref(std::size_t n, T* p, const T* g, T* m, T* v,
              const AdamCoeffs<T>& c) {
  for (std::size_t i = 0; i < n; ++i) {
    T w = p[i] - c.lr_decay * p[i];
    const T gi = g[i];
    const T mi = c.beta1 * m[i] + c.one_minus_beta1 * gi;
    const T vi = c.beta2 * v[i] + c.one_minus_beta2 * (gi * gi);
    m[i] = mi;
    v[i] = vi;
    const T num = c.lr * (mi * c.inv_bias1);
    const T den = std::sqrt(vi * c.inv_bias2) + c.eps;
    w = w - num / den;
    p[i] = w;
  }
}

const KernelTable kScalar = {
    Isa::kScalar,       &gemm_ref<float>,  &gemm_ref<double>,
    &axpy_ref<float>,   &axpy_ref<double>, &adam_ref<float>,
    &adam_ref<double>,
};

}  // namespace

namespace detail {
const KernelTable& scalar_impl() { return kScalar; }
}  // namespace detail

}  // namespace magc::kernels
