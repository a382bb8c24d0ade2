#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "audiomod/layers.hpp"
#include "audiomod/ops.hpp"

namespace audiomod::aggregation {

using nn::Tensor;

// Frame-level features: values is N x d x T', valid_len[n] in [1, T'].
template <typename T>
struct FrameFeatures {
  Tensor<T> values;
  std::vector<int> valid_len;

  int batch() const { return values.dim(0); }
  int dim() const { return values.dim(1); }
  int frames() const { return values.dim(2); }
  void validate() const;
};

enum class PoolingVariant { kAverage, kAttentive, kMax };

PoolingVariant parse_pooling(std::string_view name);
std::string_view to_string(PoolingVariant v);

// Additive scorer e_t = v^T tanh(W h_t + b).
template <typename T>
struct AttentiveParams {
  Tensor<T> w;  // d x d
  Tensor<T> b;  // d
  Tensor<T> v;  // 1 x d

  static AttentiveParams make(int d, nn::SeedSequence& seeds);
  void collect(const std::string& prefix, nn::StateCollector<T>& c);
};

// Each returns N x d and ignores every frame at or beyond valid_len.
template <typename T> Tensor<T> average_pool_time(const FrameFeatures<T>& h);
template <typename T> Tensor<T> max_pool_time(const FrameFeatures<T>& h);
template <typename T> Tensor<T> attentive_pool_time(const FrameFeatures<T>& h, const AttentiveParams<T>& p);

// Softmax-normalized frame weights a (N x T'), zero on padded frames.
template <typename T> Tensor<T> attention_weights(const FrameFeatures<T>& h, const AttentiveParams<T>& p);

template <typename T>
class PoolingHead {
 public:
  PoolingHead() = default;
  PoolingHead(PoolingVariant variant, int d, nn::SeedSequence& seeds);

  PoolingVariant variant() const { return variant_; }
  Tensor<T> operator()(const FrameFeatures<T>& h) const;
  void collect(const std::string& prefix, nn::StateCollector<T>& c);
  AttentiveParams<T>& attentive() { return attentive_; }

 private:
  PoolingVariant variant_ = PoolingVariant::kAverage;
  AttentiveParams<T> attentive_;
};

}  // namespace audiomod::aggregation
