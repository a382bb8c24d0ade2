#include <algorithm>
#include <cmath>
#include <limits>

#include "audiomod/errors.hpp"
#include "audiomod/ops.hpp"
#include "gemm.hpp"

namespace audiomod::nn {
namespace {

struct ConvGeom {
  int n, c, h, w;      // input
  int f, kh, kw;       // filters
  int stride, pad;
  int oh, ow;          // output
  int rows() const { return c * kh * kw; }
  int cols() const { return oh * ow; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

int out_extent(int in, int k, int stride, int pad) {
  const int span = in + 2 * pad - k;
  if (span < 0) return 0;
  return span / stride + 1;
}

// Output columns ox whose tap ox * stride - pad + j lands inside [0, w).
inline std::pair<int, int> valid_range(const ConvGeom& g, int j) {
  const int off = j - g.pad;
  int lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
  int hi = g.w - off <= 0 ? 0 : (g.w - off + g.stride - 1) / g.stride;
  lo = std::min(lo, g.ow);
  hi = std::clamp(hi, lo, g.ow);
  return {lo, hi};
}

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const int cols = g.cols();
  for (int c = 0; c < g.c; ++c) {
    const T* xc = x + static_cast<size_t>(c) * g.h * g.w;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        T* row = col + static_cast<size_t>((c * g.kh + i) * g.kw + j) * cols;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + i;
          T* dst = row + static_cast<size_t>(oy) * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst, g.ow, T(0));
            continue;
          }
          const T* src = xc + static_cast<size_t>(iy) * g.w;
          const int off = j - g.pad;
          const auto [lo, hi] = valid_range(g, j);
          std::fill(dst, dst + lo, T(0));
          if (g.stride == 1) {
            std::copy(src + lo + off, src + hi + off, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride + off];
          }
          std::fill(dst + hi, dst + g.ow, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* dx) {
  const int cols = g.cols();
  for (int c = 0; c < g.c; ++c) {
    T* xc = dx + static_cast<size_t>(c) * g.h * g.w;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        const T* row = col + static_cast<size_t>((c * g.kh + i) * g.kw + j) * cols;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + i;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + static_cast<size_t>(oy) * g.ow;
          T* dst = xc + static_cast<size_t>(iy) * g.w;
          const int off = j - g.pad;
          const auto [lo, hi] = valid_range(g, j);
          for (int ox = lo; ox < hi; ++ox) dst[ox * g.stride + off] += src[ox];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b, Conv2dOptions opt) {
  if (x.ndim() != 4 || w.ndim() != 4) {
    throw ShapeError("conv2d expects 4-D input and weight, got " + shape_str(x.shape()) + " and " +
                     shape_str(w.shape()));
  }
  if (opt.stride < 1 || opt.padding < 0) throw ShapeError("conv2d: stride >= 1 and padding >= 0");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3),
             opt.stride, opt.padding, 0, 0};
  if (w.dim(1) != g.c) {
    throw ShapeError("conv2d: input has " + std::to_string(g.c) + " channels, weight " +
                     shape_str(w.shape()));
  }
  if (b != nullptr && (b->ndim() != 1 || b->dim(0) != g.f)) {
    throw ShapeError("conv2d: bias shape " + shape_str(b->shape()));
  }
  g.oh = out_extent(g.h, g.kh, g.stride, g.pad);
  g.ow = out_extent(g.w, g.kw, g.stride, g.pad);
  if (g.oh < 1 || g.ow < 1) {
    throw ShapeError("conv2d output would be empty for input " + shape_str(x.shape()) +
                     " and kernel " + shape_str(w.shape()));
  }

  const size_t in_plane = static_cast<size_t>(g.c) * g.h * g.w;
  const size_t out_plane = static_cast<size_t>(g.f) * g.cols();
  std::vector<T> out(static_cast<size_t>(g.n) * out_plane);
  std::vector<T> col(g.pointwise() ? 0 : static_cast<size_t>(g.rows()) * g.cols());
  const T* wm = w.data().data();
  for (int n = 0; n < g.n; ++n) {
    const T* xn = x.data().data() + n * in_plane;
    const T* src = xn;
    if (!g.pointwise()) {
      im2col(xn, g, col.data());
      src = col.data();
    }
    T* y = out.data() + n * out_plane;
    detail::gemm(g.f, g.cols(), g.rows(), wm, false, src, false, y, false);
    if (b != nullptr) {
      const auto bv = b->data();
      for (int f = 0; f < g.f; ++f) {
        T* yf = y + static_cast<size_t>(f) * g.cols();
        for (int j = 0; j < g.cols(); ++j) yf[j] += bv[static_cast<size_t>(f)];
      }
    }
  }

  auto xnode = x.node();
  auto wnode = w.node();
  std::shared_ptr<detail::Node<T>> bnode = b != nullptr ? b->node() : nullptr;
  std::vector<Tensor<T>> inputs{x, w};
  if (b != nullptr) inputs.push_back(*b);
  return make_result<T>({g.n, g.f, g.oh, g.ow}, std::move(out), inputs, "conv2d",
                        [xnode, wnode, bnode, g, in_plane, out_plane](detail::Node<T>& self) {
    const bool gx_on = xnode->requires_grad;
    const bool gw_on = wnode->requires_grad;
    const bool gb_on = bnode && bnode->requires_grad;
    if (gx_on) xnode->ensure_grad();
    if (gw_on) wnode->ensure_grad();
    if (gb_on) bnode->ensure_grad();
    std::vector<T> col(static_cast<size_t>(g.rows()) * g.cols());
    const T* wm = wnode->value.data();
    for (int n = 0; n < g.n; ++n) {
      const T* gy = self.grad.data() + n * out_plane;
      if (gw_on) {
        const T* src = xnode->value.data() + n * in_plane;
        if (!g.pointwise()) {
          im2col(src, g, col.data());
          src = col.data();
        }
        detail::gemm(g.f, g.rows(), g.cols(), gy, false, src, true, wnode->grad.data(), true);
      }
      if (gx_on) {
        if (g.pointwise()) {
          detail::gemm(g.rows(), g.cols(), g.f, wm, true, gy, false, xnode->grad.data() + n * in_plane, true);
        } else {
          detail::gemm(g.rows(), g.cols(), g.f, wm, true, gy, false, col.data(), false);
          col2im_add(col.data(), g, xnode->grad.data() + n * in_plane);
        }
      }
      if (gb_on) {
        for (int f = 0; f < g.f; ++f) {
          const T* gf = gy + static_cast<size_t>(f) * g.cols();
          T acc = T(0);  // fixed order; a vectorized sum would depend on buffer alignment
          for (int j = 0; j < g.cols(); ++j) acc += gf[j];
          bnode->grad[static_cast<size_t>(f)] += acc;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> pool2d(const Tensor<T>& x, PoolKind kind, Pool2dOptions opt) {
  if (x.ndim() != 4) throw ShapeError("pool2d expects N x C x H x W, got " + shape_str(x.shape()));
  if (opt.kernel < 1 || opt.stride < 1 || opt.padding < 0 || opt.padding >= opt.kernel) {
    throw ShapeError("pool2d: invalid kernel/stride/padding");
  }
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = out_extent(h, opt.kernel, opt.stride, opt.padding);
  const int ow = out_extent(w, opt.kernel, opt.stride, opt.padding);
  if (oh < 1 || ow < 1) throw ShapeError("pool2d window does not fit input " + shape_str(x.shape()));

  const size_t planes = static_cast<size_t>(n) * c;
  std::vector<T> out(planes * oh * ow);
  // Max: flat source index per output. Avg: contributor count per output.
  std::vector<std::size_t> argmax(kind == PoolKind::kMax ? out.size() : 0);
  std::vector<int> counts(kind == PoolKind::kAvg ? out.size() : 0);
  const auto xv = x.data();
  for (size_t p = 0; p < planes; ++p) {
    const size_t base = p * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const size_t o = (p * oh + oy) * ow + ox;
        T acc = kind == PoolKind::kMax ? -std::numeric_limits<T>::infinity() : T(0);
        std::size_t best = 0;
        int cnt = 0;
        const int y0 = oy * opt.stride - opt.padding, x0 = ox * opt.stride - opt.padding;
        const int iy_end = std::min(h, y0 + opt.kernel), ix_end = std::min(w, x0 + opt.kernel);
        for (int iy = std::max(0, y0); iy < iy_end; ++iy) {
          for (int ix = std::max(0, x0); ix < ix_end; ++ix) {
            const size_t idx = base + static_cast<size_t>(iy) * w + ix;
            if (kind == PoolKind::kMax) {
              if (cnt == 0 || xv[idx] > acc || std::isnan(xv[idx])) {  // NaN sticks
                acc = xv[idx];
                best = idx;
              }
            } else {
              acc += xv[idx];
            }
            ++cnt;
          }
        }
        if (kind == PoolKind::kMax) {
          out[o] = acc;
          argmax[o] = best;
        } else {
          out[o] = acc / static_cast<T>(cnt);
          counts[o] = cnt;
        }
      }
    }
  }

  auto xn = x.node();
  return make_result<T>({n, c, oh, ow}, std::move(out), {x}, kind == PoolKind::kMax ? "max_pool2d" : "avg_pool2d",
                        [xn, kind, opt, h, w, oh, ow, planes, argmax = std::move(argmax),
                         counts = std::move(counts)](detail::Node<T>& self) {
    xn->ensure_grad();
    if (kind == PoolKind::kMax) {
      for (size_t o = 0; o < argmax.size(); ++o) xn->grad[argmax[o]] += self.grad[o];
      return;
    }
    for (size_t p = 0; p < planes; ++p) {
      const size_t base = p * h * w;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const size_t o = (p * oh + oy) * ow + ox;
          const T g = self.grad[o] / static_cast<T>(counts[o]);
          for (int i = 0; i < opt.kernel; ++i) {
            const int iy = oy * opt.stride - opt.padding + i;
            if (iy < 0 || iy >= h) continue;
            for (int j = 0; j < opt.kernel; ++j) {
              const int ix = ox * opt.stride - opt.padding + j;
              if (ix < 0 || ix >= w) continue;
              xn->grad[base + static_cast<size_t>(iy) * w + ix] += g;
            }
          }
        }
      }
    }
  });
}

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BatchNormState<T>& state, Mode mode) {
  if (x.ndim() != 4) throw ShapeError("batch_norm2d expects N x C x H x W, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1);
  const size_t hw = static_cast<size_t>(x.dim(2)) * x.dim(3);
  if (gamma.numel() != static_cast<size_t>(c) || beta.numel() != static_cast<size_t>(c) ||
      state.running_mean.numel() != static_cast<size_t>(c)) {
    throw ShapeError("batch_norm2d: channel count mismatch");
  }
  const size_t m = static_cast<size_t>(n) * hw;
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();

  std::vector<T> mean(static_cast<size_t>(c)), inv_std(static_cast<size_t>(c));
  if (mode == Mode::kTrain) {
    auto rm = state.running_mean.mutable_data();
    auto rv = state.running_var.mutable_data();
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* p = xv.data() + (static_cast<size_t>(b) * c + ch) * hw;
        for (size_t i = 0; i < hw; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(m);
      double ss = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* p = xv.data() + (static_cast<size_t>(b) * c + ch) * hw;
        for (size_t i = 0; i < hw; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(m);
      mean[static_cast<size_t>(ch)] = static_cast<T>(mu);
      inv_std[static_cast<size_t>(ch)] = static_cast<T>(1.0 / std::sqrt(var + state.eps));
      const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
      const auto k = static_cast<size_t>(ch);
      rm[k] = static_cast<T>((1.0 - state.momentum) * rm[k] + state.momentum * mu);
      rv[k] = static_cast<T>((1.0 - state.momentum) * rv[k] + state.momentum * unbiased);
    }
  } else {
    const auto rm = state.running_mean.data();
    const auto rv = state.running_var.data();
    for (int ch = 0; ch < c; ++ch) {
      const auto k = static_cast<size_t>(ch);
      mean[k] = rm[k];
      inv_std[k] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[k]) + state.eps));
    }
  }

  std::vector<T> out(xv.size());
  std::vector<T> xhat(xv.size());
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const auto k = static_cast<size_t>(ch);
      const size_t off = (static_cast<size_t>(b) * c + ch) * hw;
      for (size_t i = 0; i < hw; ++i) {
        const T xh = (xv[off + i] - mean[k]) * inv_std[k];
        xhat[off + i] = xh;
        out[off + i] = gv[k] * xh + bv[k];
      }
    }
  }

  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  const bool train = mode == Mode::kTrain;
  return make_result<T>(x.shape(), std::move(out), {x, gamma, beta}, "batch_norm2d",
                        [xn, gn, bn, n, c, hw, m, train, inv_std = std::move(inv_std),
                         xhat = std::move(xhat)](detail::Node<T>& self) {
    const auto& g = self.grad;
    for (int ch = 0; ch < c; ++ch) {
      const auto k = static_cast<size_t>(ch);
      T sum_g = T(0), sum_gx = T(0);
      for (int b = 0; b < n; ++b) {
        const size_t off = (static_cast<size_t>(b) * c + ch) * hw;
        for (size_t i = 0; i < hw; ++i) {
          sum_g += g[off + i];
          sum_gx += g[off + i] * xhat[off + i];
        }
      }
      if (gn->requires_grad) {
        gn->ensure_grad();
        gn->grad[k] += sum_gx;
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        bn->grad[k] += sum_g;
      }
      if (!xn->requires_grad) continue;
      xn->ensure_grad();
      const T gamma_k = gn->value[k];
      const T scale_k = gamma_k * inv_std[k];
      const T mean_g = sum_g / static_cast<T>(m);
      const T mean_gx = sum_gx / static_cast<T>(m);
      for (int b = 0; b < n; ++b) {
        const size_t off = (static_cast<size_t>(b) * c + ch) * hw;
        for (size_t i = 0; i < hw; ++i) {
          if (train) {
            xn->grad[off + i] += scale_k * (g[off + i] - mean_g - xhat[off + i] * mean_gx);
          } else {
            xn->grad[off + i] += scale_k * g[off + i];
          }
        }
      }
    }
  });
}

#define AUDIOMOD_INSTANTIATE(T)                                                                 \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, Conv2dOptions); \
  template Tensor<T> pool2d(const Tensor<T>&, PoolKind, Pool2dOptions);                         \
  template Tensor<T> batch_norm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                  BatchNormState<T>&, Mode);

AUDIOMOD_INSTANTIATE(float)
AUDIOMOD_INSTANTIATE(double)

#undef AUDIOMOD_INSTANTIATE

}  // namespace audiomod::nn
