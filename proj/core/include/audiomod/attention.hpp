#pragma once

#include <string>
#include <string_view>

#include "audiomod/layers.hpp"
#include "audiomod/ops.hpp"

namespace audiomod::attention {

using nn::AxisMask;
using nn::Mode;
using nn::Tensor;

enum class AttentionVariant { kNone, kSe, kCbam, kCa };

struct AttentionKind {
  AttentionVariant variant = AttentionVariant::kNone;
  int reduction_r = 16;
};

AttentionVariant parse_attention(std::string_view name);
std::string_view to_string(AttentionVariant v);

// Bottleneck width C/r, never below 1.
int reduced_channels(int channels, int reduction_r);

// Squeeze-and-excitation: s = sigmoid(W2 relu(W1 z)), z the spatial mean.
template <typename T>
struct SEWeights {
  Tensor<T> w1;  // C/r x C
  Tensor<T> w2;  // C x C/r

  static SEWeights make(int channels, int reduction_r, nn::SeedSequence& seeds);
  void collect(const std::string& prefix, nn::StateCollector<T>& c);
};

// CBAM: shared bias-free MLP channel gate, then a 7x7 spatial gate over the
// [mean, max]-over-channels maps.
template <typename T>
struct CBAMWeights {
  Tensor<T> w0;       // C/r x C
  Tensor<T> w1;       // C x C/r
  Tensor<T> spatial;  // 1 x 2 x 7 x 7

  static CBAMWeights make(int channels, int reduction_r, nn::SeedSequence& seeds);
  void collect(const std::string& prefix, nn::StateCollector<T>& c);
};

// Coordinate attention: directional means, shared 1x1 conv + BN + ReLU at
// C/r channels, then separate 1x1 convs producing height and width gates.
template <typename T>
struct CAWeights {
  nn::Conv2dLayer<T> reduce;
  nn::BatchNormLayer<T> bn;
  nn::Conv2dLayer<T> gate_h;
  nn::Conv2dLayer<T> gate_w;

  static CAWeights make(int channels, int reduction_r, nn::SeedSequence& seeds);
  void collect(const std::string& prefix, nn::StateCollector<T>& c);
};

// All blocks take N x C x H x W and preserve shape. When `mask` is given,
// spatial statistics skip padded rows along mask->axis (must be 2, the H
// axis) and the caller is expected to have zeroed those rows.
template <typename T>
Tensor<T> se_block(const Tensor<T>& x, const SEWeights<T>& w, const AxisMask* mask = nullptr);

template <typename T>
Tensor<T> cbam_block(const Tensor<T>& x, const CBAMWeights<T>& w, const AxisMask* mask = nullptr);

template <typename T>
Tensor<T> ca_block(const Tensor<T>& x, CAWeights<T>& w, Mode mode, const AxisMask* mask = nullptr);

// Type-erased holder used by the residual blocks.
template <typename T>
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(AttentionKind kind, int channels, nn::SeedSequence& seeds);

  AttentionVariant variant() const { return variant_; }
  Tensor<T> operator()(const Tensor<T>& x, Mode mode, const AxisMask* mask);
  void collect(const std::string& prefix, nn::StateCollector<T>& c);

  SEWeights<T>& se() { return se_; }
  CBAMWeights<T>& cbam() { return cbam_; }
  CAWeights<T>& ca() { return ca_; }

 private:
  AttentionVariant variant_ = AttentionVariant::kNone;
  SEWeights<T> se_;
  CBAMWeights<T> cbam_;
  CAWeights<T> ca_;
};

}  // namespace audiomod::attention
