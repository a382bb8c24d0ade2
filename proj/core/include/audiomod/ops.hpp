#pragma once

#include <optional>
#include <vector>

#include "audiomod/tensor.hpp"

namespace audiomod::nn {

// Per-item valid length along one axis (the time axis in this project).
// Positions at or beyond lengths[n] are padding.
struct AxisMask {
  int axis = 2;
  std::vector<int> lengths;
};

// --- Elementwise -------------------------------------------------------
// Binary ops broadcast with numpy rules: shapes are right-aligned and a
// dimension of 1 stretches to match.

enum class ElementwiseOp { kAdd, kSub, kMul, kRelu, kSigmoid, kTanh };

template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>* b = nullptr);

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);

Shape broadcast_shape(const Shape& a, const Shape& b);

// --- Shape manipulation ------------------------------------------------

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> transpose(const Tensor<T>& x, int axis_a, int axis_b);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <typename T> Tensor<T> slice(const Tensor<T>& x, int axis, int start, int length);

// Zeroes every position at or beyond the valid length along mask.axis.
template <typename T> Tensor<T> apply_mask(const Tensor<T>& x, const AxisMask& mask);

// --- Reductions --------------------------------------------------------

enum class ReduceKind { kSum, kMean, kMax };

// Reduces the listed axes (kept as size-1 dims). With a mask, padded
// positions never contribute; means divide by the count of valid
// contributors. Max routes its gradient to the first argmax in row-major
// scan order.
template <typename T>
Tensor<T> reduce(const Tensor<T>& x, const std::vector<int>& axes, ReduceKind kind,
                 const AxisMask* mask = nullptr);

template <typename T> Tensor<T> sum_all(const Tensor<T>& x);
template <typename T> Tensor<T> mean_all(const Tensor<T>& x);

// --- Softmax -----------------------------------------------------------

// Max-subtracted softmax over the last axis.
template <typename T> Tensor<T> softmax(const Tensor<T>& z);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& z);

// Softmax over the last axis of an N x L tensor, padded positions excluded
// (they receive weight 0).
template <typename T> Tensor<T> masked_softmax(const Tensor<T>& z, const std::vector<int>& lengths);

// --- Layers ------------------------------------------------------------

// x: N x I, w: O x I, b: O. Returns x w^T + b.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b = nullptr);

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
};

// x: N x C x H x W, w: F x C x kh x kw, b: F. Zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b = nullptr,
                 Conv2dOptions opt = {});

enum class PoolKind { kMax, kAvg };

struct Pool2dOptions {
  int kernel = 2;
  int stride = 2;
  int padding = 0;
};

// Padded cells are ignored (never the max, not counted in the mean).
template <typename T>
Tensor<T> pool2d(const Tensor<T>& x, PoolKind kind, Pool2dOptions opt);

enum class Mode { kTrain, kEval };

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(int channels = 1)
      : running_mean(Tensor<T>::zeros({channels})), running_var(Tensor<T>::ones({channels})) {}
};

// Per-channel normalization over N, H, W. Train mode uses batch statistics
// and updates the running estimates (unbiased variance); eval mode uses the
// running estimates.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BatchNormState<T>& state, Mode mode);

// --- Initialization ----------------------------------------------------

// He-normal with the given fan-in, using a 64-bit Mersenne twister.
template <typename T>
Tensor<T> he_normal(Shape shape, int fan_in, std::uint64_t seed);

}  // namespace audiomod::nn
