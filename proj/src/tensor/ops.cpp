#include "magc/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "magc/error.hpp"
#include "magc/kernels/kernels.hpp"
#include "magc/tensor/tape.hpp"

namespace magc {
namespace {

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> ts) {
  if (!GradMode::enabled()) return false;
  for (const Tensor<T>* t : ts)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

template <typename T>
void finish(Tensor<T>& out, const char* op, bool grad) {
  out.check_finite(op);
  if (grad) out.set_requires_grad(true);
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  check(s.size() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                              " tensor, got " + shape_str(s));
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  check(a == b, std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

template <typename T>
void accumulate(std::span<T> dst, std::span<const T> src) {
  kernels::axpy<T>(dst.size(), T(1), src.data(), dst.data());
}

struct ConvGeom {
  std::size_t n, c, h, w, o, k, oh, ow;
  std::size_t stride, pad;
  PadMode mode;
  std::size_t ckk() const { return c * k * k; }
  std::size_t positions() const { return oh * ow; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

inline long clamp_index(long v, std::size_t n) {
  return std::clamp<long>(v, 0, static_cast<long>(n) - 1);
}

// cols row (ci*k + ki)*k + kj, column oh*OW + ow.
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const std::size_t p = g.positions();
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    const T* xc = x + ci * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* dst = cols + ((ci * g.k + ki) * g.k + kj) * p;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          T* row = dst + oy * g.ow;
          if (g.mode == PadMode::kZeros && (iy < 0 || iy >= static_cast<long>(g.h))) {
            std::fill(row, row + g.ow, T(0));
            continue;
          }
          const T* xrow = xc + clamp_index(iy, g.h) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (g.mode == PadMode::kZeros && (ix < 0 || ix >= static_cast<long>(g.w))) {
              row[ox] = T(0);
            } else {
              row[ox] = xrow[clamp_index(ix, g.w)];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* dx) {
  const std::size_t p = g.positions();
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    T* dxc = dx + ci * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* src = cols + ((ci * g.k + ki) * g.k + kj) * p;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (g.mode == PadMode::kZeros && (iy < 0 || iy >= static_cast<long>(g.h))) continue;
          T* dxrow = dxc + clamp_index(iy, g.h) * g.w;
          const T* row = src + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (g.mode == PadMode::kZeros && (ix < 0 || ix >= static_cast<long>(g.w))) continue;
            dxrow[clamp_index(ix, g.w)] += row[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void transpose(const T* src, std::size_t rows, std::size_t cols, T* dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, const ConvOptions& opt) {
  require_rank(input.shape(), 4, "conv2d input");
  require_rank(weight.shape(), 4, "conv2d weight");
  check(opt.stride >= 1, "conv2d: stride must be >= 1");
  ConvGeom g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.o = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = opt.stride;
  g.pad = opt.padding;
  g.mode = opt.pad_mode;
  check(weight.dim(1) == g.c && weight.dim(3) == g.k,
        "conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
            shape_str(input.shape()));
  check(g.h + 2 * g.pad >= g.k && g.w + 2 * g.pad >= g.k,
        "conv2d: input " + shape_str(input.shape()) + " smaller than kernel " +
            std::to_string(g.k) + " with padding " + std::to_string(g.pad));
  if (bias.defined()) {
    check(bias.numel() == g.o, "conv2d: bias has " + std::to_string(bias.numel()) +
                                   " elements, expected " + std::to_string(g.o));
  }
  input.check_finite("conv2d input");
  g.oh = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.k) / g.stride + 1;

  const std::size_t P = g.positions(), CKK = g.ckk();
  Tensor<T> out(Shape{g.n, g.o, g.oh, g.ow});
  std::vector<T> cols(g.pointwise() ? 0 : CKK * P);
  T* y = out.mutable_ptr();
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xn = input.ptr() + n * g.c * g.h * g.w;
    T* yn = y + n * g.o * P;
    if (bias.defined()) {
      for (std::size_t o = 0; o < g.o; ++o) std::fill(yn + o * P, yn + (o + 1) * P, bias.data()[o]);
    }
    const T* src = xn;
    if (!g.pointwise()) {
      im2col(xn, g, cols.data());
      src = cols.data();
    }
    kernels::gemm<T>(g.o, P, CKK, weight.ptr(), CKK, src, P, yn, P);
  }

  const bool grad = any_requires_grad<T>({&input, &weight, &bias});
  finish(out, "conv2d", grad);
  if (grad) {
    tape<T>().record([input, weight, bias, out, g]() mutable {
      if (!out.has_grad()) return;
      const std::size_t P = g.positions(), CKK = g.ckk();
      const T* gy = out.grad().data();
      const bool gw = weight.requires_grad(), gb = bias.defined() && bias.requires_grad(),
                 gx = input.requires_grad();
      std::vector<T> cols, cols_t, wt, dcols;
      if (gw && !g.pointwise()) cols.resize(CKK * P);
      if (gw) cols_t.resize(P * CKK);
      if (gx) {
        wt.resize(CKK * g.o);
        transpose(weight.ptr(), g.o, CKK, wt.data());
        if (!g.pointwise()) dcols.resize(CKK * P);
      }
      T* dw = gw ? weight.mutable_grad().data() : nullptr;
      T* db = gb ? bias.mutable_grad().data() : nullptr;
      T* dx = gx ? input.mutable_grad().data() : nullptr;
      for (std::size_t n = 0; n < g.n; ++n) {
        const T* gn = gy + n * g.o * P;
        const T* xn = input.ptr() + n * g.c * g.h * g.w;
        if (gw) {
          const T* src = xn;
          if (!g.pointwise()) {
            im2col(xn, g, cols.data());
            src = cols.data();
          }
          transpose(src, CKK, P, cols_t.data());
          kernels::gemm<T>(g.o, CKK, P, gn, P, cols_t.data(), CKK, dw, CKK);
        }
        if (gb) {
          for (std::size_t o = 0; o < g.o; ++o) {
            T s = T(0);
            for (std::size_t p = 0; p < P; ++p) s += gn[o * P + p];
            db[o] += s;
          }
        }
        if (gx) {
          T* dxn = dx + n * g.c * g.h * g.w;
          if (g.pointwise()) {
            kernels::gemm<T>(CKK, P, g.o, wt.data(), g.o, gn, P, dxn, P);
          } else {
            std::fill(dcols.begin(), dcols.end(), T(0));
            kernels::gemm<T>(CKK, P, g.o, wt.data(), g.o, gn, P, dcols.data(), P);
            col2im(dcols.data(), g, dxn);
          }
        }
      }
    });
  }
  return out;
}

namespace {

// Maps flat indices between (N, C*r*r, H, W) and (N, C, H*r, W*r).
template <typename T, typename F>
void shuffle_walk(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                  std::size_t r, F&& visit) {
  const std::size_t cin = c * r * r;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) {
          const std::size_t src_c = ch * r * r + i * r + j;
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
              const std::size_t packed = ((b * cin + src_c) * h + y) * w + x;
              const std::size_t spread = ((b * c + ch) * h * r + (y * r + i)) * w * r + (x * r + j);
              visit(packed, spread);
            }
        }
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& input, std::size_t r) {
  require_rank(input.shape(), 4, "pixel_shuffle");
  check(r >= 1 && input.dim(1) % (r * r) == 0,
        "pixel_shuffle: channels " + std::to_string(input.dim(1)) + " not divisible by r^2=" +
            std::to_string(r * r));
  const std::size_t n = input.dim(0), c = input.dim(1) / (r * r), h = input.dim(2), w = input.dim(3);
  Tensor<T> out(Shape{n, c, h * r, w * r});
  const T* src = input.ptr();
  T* dst = out.mutable_ptr();
  shuffle_walk<T>(n, c, h, w, r, [&](std::size_t packed, std::size_t spread) { dst[spread] = src[packed]; });
  const bool grad = any_requires_grad<T>({&input});
  finish(out, "pixel_shuffle", grad);
  if (grad) {
    tape<T>().record([input, out, n, c, h, w, r]() mutable {
      if (!out.has_grad()) return;
      T* gx = input.mutable_grad().data();
      const T* gy = out.grad().data();
      shuffle_walk<T>(n, c, h, w, r, [&](std::size_t packed, std::size_t spread) { gx[packed] += gy[spread]; });
    });
  }
  return out;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& input, std::size_t r) {
  require_rank(input.shape(), 4, "pixel_unshuffle");
  check(r >= 1 && input.dim(2) % r == 0 && input.dim(3) % r == 0,
        "pixel_unshuffle: spatial dims of " + shape_str(input.shape()) +
            " not divisible by " + std::to_string(r));
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2) / r, w = input.dim(3) / r;
  Tensor<T> out(Shape{n, c * r * r, h, w});
  const T* src = input.ptr();
  T* dst = out.mutable_ptr();
  shuffle_walk<T>(n, c, h, w, r, [&](std::size_t packed, std::size_t spread) { dst[packed] = src[spread]; });
  const bool grad = any_requires_grad<T>({&input});
  finish(out, "pixel_unshuffle", grad);
  if (grad) {
    tape<T>().record([input, out, n, c, h, w, r]() mutable {
      if (!out.has_grad()) return;
      T* gx = input.mutable_grad().data();
      const T* gy = out.grad().data();
      shuffle_walk<T>(n, c, h, w, r, [&](std::size_t packed, std::size_t spread) { gx[spread] += gy[packed]; });
    });
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BatchNormStats<T>& stats,
                     Phase phase, T eps) {
  require_rank(input.shape(), 4, "batch_norm");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  const std::size_t count = n * hw;
  check(stats.running_mean.defined() && stats.running_mean.numel() == c &&
            stats.running_var.defined() && stats.running_var.numel() == c,
        "batch_norm: running stats do not match " + std::to_string(c) + " channels");
  Tensor<T> out(input.shape());
  const T* x = input.ptr();
  T* y = out.mutable_ptr();
  std::vector<T> inv_std(c);

  if (phase == Phase::kTrain) {
    check(count >= 2, "batch_norm: training needs at least 2 values per channel, got " +
                          std::to_string(count));
    T* rm = stats.running_mean.mutable_ptr();
    T* rv = stats.running_var.mutable_ptr();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* xc = x + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += xc[i];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* xc = x + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = xc[i] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(count);
      const double istd = 1.0 / std::sqrt(var + static_cast<double>(eps));
      inv_std[ch] = static_cast<T>(istd);
      for (std::size_t b = 0; b < n; ++b) {
        const T* xc = x + (b * c + ch) * hw;
        T* yc = y + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) yc[i] = static_cast<T>((xc[i] - mu) * istd);
      }
      const double unbiased = ss / static_cast<double>(count - 1);
      rm[ch] = static_cast<T>((1.0 - stats.momentum) * rm[ch] + stats.momentum * mu);
      rv[ch] = static_cast<T>((1.0 - stats.momentum) * rv[ch] + stats.momentum * unbiased);
    }
  } else {
    const T* rm = stats.running_mean.ptr();
    const T* rv = stats.running_var.ptr();
    for (std::size_t ch = 0; ch < c; ++ch) {
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[ch]) + eps));
      for (std::size_t b = 0; b < n; ++b) {
        const T* xc = x + (b * c + ch) * hw;
        T* yc = y + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) yc[i] = (xc[i] - rm[ch]) * inv_std[ch];
      }
    }
  }

  const bool grad = any_requires_grad<T>({&input});
  finish(out, "batch_norm", grad);
  if (grad) {
    tape<T>().record([input, out, inv_std, phase, n, c, hw]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      const T* xh = out.ptr();
      T* gx = input.mutable_grad().data();
      const double cnt = static_cast<double>(n * hw);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double mean_g = 0.0, mean_gx = 0.0;
        if (phase == Phase::kTrain) {
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              mean_g += gy[off + i];
              mean_gx += static_cast<double>(gy[off + i]) * xh[off + i];
            }
          }
          mean_g /= cnt;
          mean_gx /= cnt;
        }
        for (std::size_t b = 0; b < n; ++b) {
          const std::size_t off = (b * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            gx[off + i] += static_cast<T>(inv_std[ch] * (gy[off + i] - mean_g - xh[off + i] * mean_gx));
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, T slope) {
  Tensor<T> out(input.shape());
  const T* x = input.ptr();
  T* y = out.mutable_ptr();
  for (std::size_t i = 0; i < input.numel(); ++i) y[i] = x[i] >= T(0) ? x[i] : slope * x[i];
  const bool grad = any_requires_grad<T>({&input});
  finish(out, "leaky_relu", grad);
  if (grad) {
    tape<T>().record([input, out, slope]() mutable {
      if (!out.has_grad()) return;
      const T* x = input.ptr();
      const T* gy = out.grad().data();
      T* gx = input.mutable_grad().data();
      for (std::size_t i = 0; i < input.numel(); ++i) gx[i] += x[i] >= T(0) ? gy[i] : slope * gy[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.mutable_ptr()[i] = a.ptr()[i] + b.ptr()[i];
  const bool grad = any_requires_grad<T>({&a, &b});
  finish(out, "add", grad);
  if (grad) {
    tape<T>().record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      if (a.requires_grad()) accumulate<T>(a.mutable_grad(), out.grad());
      if (b.requires_grad()) accumulate<T>(b.mutable_grad(), out.grad());
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.mutable_ptr()[i] = a.ptr()[i] - b.ptr()[i];
  const bool grad = any_requires_grad<T>({&a, &b});
  finish(out, "sub", grad);
  if (grad) {
    tape<T>().record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      if (a.requires_grad()) accumulate<T>(a.mutable_grad(), out.grad());
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        kernels::axpy<T>(gb.size(), T(-1), out.grad().data(), gb.data());
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.mutable_ptr()[i] = a.ptr()[i] * b.ptr()[i];
  const bool grad = any_requires_grad<T>({&a, &b});
  finish(out, "mul", grad);
  if (grad) {
    tape<T>().record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      if (a.requires_grad()) {
        T* ga = a.mutable_grad().data();
        for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += gy[i] * b.ptr()[i];
      }
      if (b.requires_grad()) {
        T* gb = b.mutable_grad().data();
        for (std::size_t i = 0; i < b.numel(); ++i) gb[i] += gy[i] * a.ptr()[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.mutable_ptr()[i] = a.ptr()[i] * factor;
  const bool grad = any_requires_grad<T>({&a});
  finish(out, "scale", grad);
  if (grad) {
    tape<T>().record([a, out, factor]() mutable {
      if (!out.has_grad()) return;
      auto ga = a.mutable_grad();
      kernels::axpy<T>(ga.size(), factor, out.grad().data(), ga.data());
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_channel(const Tensor<T>& x, const Tensor<T>& v) {
  require_rank(x.shape(), 4, "add_channel");
  require_rank(v.shape(), 4, "add_channel bias");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  check(v.dim(1) == c && v.dim(2) == 1 && v.dim(3) == 1 && (v.dim(0) == n || v.dim(0) == 1),
        "add_channel: bias " + shape_str(v.shape()) + " does not broadcast to " + shape_str(x.shape()));
  const bool per_sample = v.dim(0) == n && n > 1;
  Tensor<T> out(x.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T bias = v.ptr()[(per_sample ? b * c : 0) + ch];
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) out.mutable_ptr()[off + i] = x.ptr()[off + i] + bias;
    }
  const bool grad = any_requires_grad<T>({&x, &v});
  finish(out, "add_channel", grad);
  if (grad) {
    tape<T>().record([x, v, out, n, c, hw, per_sample]() mutable {
      if (!out.has_grad()) return;
      if (x.requires_grad()) accumulate<T>(x.mutable_grad(), out.grad());
      if (v.requires_grad()) {
        T* gv = v.mutable_grad().data();
        const T* gy = out.grad().data();
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t ch = 0; ch < c; ++ch) {
            T s = T(0);
            const std::size_t off = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) s += gy[off + i];
            gv[(per_sample ? b * c : 0) + ch] += s;
          }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> expand_channels(const Tensor<T>& v, std::size_t n, std::size_t h,
                          std::size_t w) {
  require_rank(v.shape(), 1, "expand_channels");
  const std::size_t c = v.numel(), hw = h * w;
  Tensor<T> out(Shape{n, c, h, w});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      std::fill_n(out.mutable_ptr() + (b * c + ch) * hw, hw, v.ptr()[ch]);
  const bool grad = any_requires_grad<T>({&v});
  finish(out, "expand_channels", grad);
  if (grad) {
    tape<T>().record([v, out, n, c, hw]() mutable {
      if (!out.has_grad()) return;
      T* gv = v.mutable_grad().data();
      const T* gy = out.grad().data();
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
          T s = T(0);
          for (std::size_t i = 0; i < hw; ++i) s += gy[(b * c + ch) * hw + i];
          gv[ch] += s;
        }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  check(!parts.empty(), "concat: no inputs");
  const Shape& first = parts[0].shape();
  check(axis < first.size(), "concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor<T>& p : parts) {
    check(p.rank() == first.size(), "concat: rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis) {
        check(p.dim(d) == first[d], "concat: non-axis dims differ, " + shape_str(first) + " vs " +
                                        shape_str(p.shape()));
      }
    }
    out_shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  Tensor<T> out(out_shape);
  const std::size_t out_row = out_shape[axis] * inner;
  std::size_t offset = 0;
  for (const Tensor<T>& p : parts) {
    const std::size_t row = p.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.ptr() + o * row, row, out.mutable_ptr() + o * out_row + offset);
    offset += row;
  }
  bool grad = false;
  if (GradMode::enabled())
    for (const Tensor<T>& p : parts) grad = grad || p.requires_grad();
  finish(out, "concat", grad);
  if (grad) {
    std::vector<Tensor<T>> saved(parts.begin(), parts.end());
    tape<T>().record([saved, out, outer, inner, out_row, axis]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      std::size_t offset = 0;
      for (Tensor<T>& p : saved) {
        const std::size_t row = p.dim(axis) * inner;
        if (p.requires_grad()) {
          T* gp = p.mutable_grad().data();
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < row; ++i) gp[o * row + i] += gy[o * out_row + offset + i];
        }
        offset += row;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank(x.shape(), 4, "slice_channels");
  check(begin < end && end <= x.dim(1), "slice_channels: range [" + std::to_string(begin) + "," +
                                            std::to_string(end) + ") invalid for " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3), k = end - begin;
  Tensor<T> out(Shape{n, k, x.dim(2), x.dim(3)});
  for (std::size_t b = 0; b < n; ++b)
    std::copy_n(x.ptr() + (b * c + begin) * hw, k * hw, out.mutable_ptr() + b * k * hw);
  const bool grad = any_requires_grad<T>({&x});
  finish(out, "slice_channels", grad);
  if (grad) {
    tape<T>().record([x, out, n, c, hw, k, begin]() mutable {
      if (!out.has_grad()) return;
      T* gx = x.mutable_grad().data();
      const T* gy = out.grad().data();
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < k * hw; ++i) gx[(b * c + begin) * hw + i] += gy[b * k * hw + i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> avg_downsample(const Tensor<T>& x, std::size_t factor) {
  require_rank(x.shape(), 4, "avg_downsample");
  check(factor >= 1 && x.dim(2) % factor == 0 && x.dim(3) % factor == 0,
        "avg_downsample: " + shape_str(x.shape()) + " not divisible by " + std::to_string(factor));
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / factor, ow = w / factor;
  Tensor<T> out(Shape{x.dim(0), x.dim(1), oh, ow});
  const T inv = T(1) / static_cast<T>(factor * factor);
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T s = T(0);
        for (std::size_t i = 0; i < factor; ++i)
          for (std::size_t j = 0; j < factor; ++j) s += x.ptr()[(p * h + oy * factor + i) * w + ox * factor + j];
        out.mutable_ptr()[(p * oh + oy) * ow + ox] = s * inv;
      }
  const bool grad = any_requires_grad<T>({&x});
  finish(out, "avg_downsample", grad);
  if (grad) {
    tape<T>().record([x, out, nc, h, w, oh, ow, factor, inv]() mutable {
      if (!out.has_grad()) return;
      T* gx = x.mutable_grad().data();
      const T* gy = out.grad().data();
      for (std::size_t p = 0; p < nc; ++p)
        for (std::size_t oy = 0; oy < oh; ++oy)
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const T g = gy[(p * oh + oy) * ow + ox] * inv;
            for (std::size_t i = 0; i < factor; ++i)
              for (std::size_t j = 0; j < factor; ++j) gx[(p * h + oy * factor + i) * w + ox * factor + j] += g;
          }
    });
  }
  return out;
}

namespace {

// Elementwise op with derivative expressed from (x, y).
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, const char* name, F&& f, D&& df) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out.mutable_ptr()[i] = f(x.ptr()[i]);
  const bool grad = any_requires_grad<T>({&x});
  finish(out, name, grad);
  if (grad) {
    tape<T>().record([x, out, df]() mutable {
      if (!out.has_grad()) return;
      T* gx = x.mutable_grad().data();
      const T* gy = out.grad().data();
      for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += gy[i] * df(x.ptr()[i], out.ptr()[i]);
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return unary(
      x, "softplus",
      [](T v) { return v > T(20) ? v : static_cast<T>(std::log1p(std::exp(static_cast<double>(v)))); },
      [](T v, T) { return static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v)))); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary(
      x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T floor) {
  return unary(
      x, "clamp_min", [floor](T v) { return v > floor ? v : floor; },
      [floor](T v, T) { return v > floor ? T(1) : T(0); });
}

template <typename T>
Tensor<T> ste_round(const Tensor<T>& x) {
  return unary(
      x, "ste_round", [](T v) { return std::round(v); }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double s = 0.0;
  for (T v : x.data()) s += v;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s));
  const bool grad = any_requires_grad<T>({&x});
  finish(out, "sum", grad);
  if (grad) {
    tape<T>().record([x, out]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0];
      for (T& v : x.mutable_grad()) v += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.ptr()[i]) - b.ptr()[i];
    s += d * d;
  }
  const double count = static_cast<double>(a.numel());
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s / count));
  const bool grad = any_requires_grad<T>({&a, &b});
  finish(out, "mse", grad);
  if (grad) {
    tape<T>().record([a, b, out, count]() mutable {
      if (!out.has_grad()) return;
      const T k = static_cast<T>(2.0 * out.grad()[0] / count);
      if (a.requires_grad()) {
        T* ga = a.mutable_grad().data();
        for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += k * (a.ptr()[i] - b.ptr()[i]);
      }
      if (b.requires_grad()) {
        T* gb = b.mutable_grad().data();
        for (std::size_t i = 0; i < b.numel(); ++i) gb[i] -= k * (a.ptr()[i] - b.ptr()[i]);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const Tensor<T>& w) {
  require_same(x.shape(), w.shape(), "weighted_sum");
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += static_cast<double>(x.ptr()[i]) * w.ptr()[i];
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s));
  const bool grad = any_requires_grad<T>({&x});
  finish(out, "weighted_sum", grad);
  if (grad) {
    tape<T>().record([x, w, out]() mutable {
      if (!out.has_grad()) return;
      auto gx = x.mutable_grad();
      kernels::axpy<T>(gx.size(), out.grad()[0], w.ptr(), gx.data());
    });
  }
  return out;
}

#define MAGC_INSTANTIATE_OPS(T)                                                             \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                            const ConvOptions&);                                            \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, std::size_t);                          \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, std::size_t);                        \
  template Tensor<T> batch_norm(const Tensor<T>&, BatchNormStats<T>&, Phase, T);            \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale(const Tensor<T>&, T);                                            \
  template Tensor<T> add_channel(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> expand_channels(const Tensor<T>&, std::size_t, std::size_t, std::size_t); \
  template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);                       \
  template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);            \
  template Tensor<T> avg_downsample(const Tensor<T>&, std::size_t);                         \
  template Tensor<T> softplus(const Tensor<T>&);                                            \
  template Tensor<T> exp(const Tensor<T>&);                                                 \
  template Tensor<T> clamp_min(const Tensor<T>&, T);                                        \
  template Tensor<T> ste_round(const Tensor<T>&);                                           \
  template Tensor<T> sum(const Tensor<T>&);                                                 \
  template Tensor<T> mean(const Tensor<T>&);                                                \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> weighted_sum(const Tensor<T>&, const Tensor<T>&);

MAGC_INSTANTIATE_OPS(float)
MAGC_INSTANTIATE_OPS(double)

#undef MAGC_INSTANTIATE_OPS

}  // namespace magc
