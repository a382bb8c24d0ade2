#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "audiomod/tensor.hpp"

namespace audiomod::testing {

template <typename T = double>
nn::Tensor<T> random_tensor(nn::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> v(nn::shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(u(rng));
  return nn::Tensor<T>(std::move(shape), std::move(v));
}

// Values bounded away from zero so ReLU kinks stay out of reach of +-eps.
inline nn::Tensor<double> random_off_zero(nn::Shape shape, std::uint64_t seed, double min_abs = 0.05) {
  auto t = random_tensor<double>(std::move(shape), seed);
  for (auto& x : t.mutable_data())
    if (std::abs(x) < min_abs) x = x < 0 ? -min_abs : min_abs;
  return t;
}

inline std::vector<double> to_vec(const nn::Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Per-test scratch directory under the build tree, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("audiomod_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// |DFT_k|^2 by the O(n^2) definition, k = 0..n/2.
inline std::vector<double> naive_power_spectrum(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    long double re = 0, im = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const long double a = -2.0L * 3.14159265358979323846264338327950288L * k * t / n;
      re += x[t] * std::cos(a);
      im += x[t] * std::sin(a);
    }
    out[k] = static_cast<double>(re * re + im * im);
  }
  return out;
}

// Dense row-major 4-D indexing helper.
struct Dims4 {
  int n, c, h, w;
  std::size_t at(int a, int b, int y, int x) const {
    return ((static_cast<std::size_t>(a) * c + b) * h + y) * w + x;
  }
};

inline std::vector<double> naive_conv2d(const std::vector<double>& x, Dims4 xd, const std::vector<double>& w,
                                        int f, int k, const std::vector<double>* b, int stride, int pad,
                                        int* oh_out = nullptr, int* ow_out = nullptr) {
  const int oh = (xd.h + 2 * pad - k) / stride + 1;
  const int ow = (xd.w + 2 * pad - k) / stride + 1;
  Dims4 od{xd.n, f, oh, ow};
  Dims4 wd{f, xd.c, k, k};
  std::vector<double> y(static_cast<std::size_t>(xd.n) * f * oh * ow, 0.0);
  for (int n = 0; n < xd.n; ++n)
    for (int o = 0; o < f; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double s = b ? (*b)[o] : 0.0;
          for (int c = 0; c < xd.c; ++c)
            for (int u = 0; u < k; ++u)
              for (int v = 0; v < k; ++v) {
                const int yy = i * stride - pad + u, xx = j * stride - pad + v;
                if (yy < 0 || yy >= xd.h || xx < 0 || xx >= xd.w) continue;
                s += x[xd.at(n, c, yy, xx)] * w[wd.at(o, c, u, v)];
              }
          y[od.at(n, o, i, j)] = s;
        }
  if (oh_out) *oh_out = oh;
  if (ow_out) *ow_out = ow;
  return y;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// y = W v for W rows x cols row-major.
inline std::vector<double> matvec(const std::vector<double>& W, int rows, int cols, const std::vector<double>& v) {
  std::vector<double> y(rows, 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) y[r] += W[static_cast<std::size_t>(r) * cols + c] * v[c];
  return y;
}

inline std::vector<double> relu(std::vector<double> v) {
  for (auto& x : v) x = std::max(0.0, x);
  return v;
}

}  // namespace audiomod::testing
