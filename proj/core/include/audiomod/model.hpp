#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "audiomod/aggregation.hpp"
#include "audiomod/attention.hpp"
#include "audiomod/layers.hpp"

namespace audiomod::model {

using nn::Mode;
using nn::Tensor;

enum class Arch { kResnet18, kResnet50, kMicro };

Arch parse_arch(std::string_view name);
std::string_view to_string(Arch a);

struct ModelConfig {
  Arch arch = Arch::kResnet18;
  // Per-stage widths; empty means the arch default.
  std::vector<int> channels;
  attention::AttentionKind attention;
  aggregation::PoolingVariant pooling = aggregation::PoolingVariant::kAverage;
  int n_classes = 2;
  int n_mels = 80;

  void validate() const;
  std::vector<int> stage_widths() const;
  std::vector<int> stage_blocks() const;
  bool bottleneck() const { return arch == Arch::kResnet50; }
  // Channel count of the frame-level features (the pooling width d).
  int embedding_dim() const;
};

// key = value lines describing the config; written next to checkpoints.
std::string describe(const ModelConfig& cfg);

// Stem and stage strides shrink time by this factor.
inline constexpr int kTimeReduction = 32;

// Valid frame count after one stride-2 stage.
inline int halve_ceil(int n) { return (n + 1) / 2; }

template <typename T>
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  ~Model();
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }

  // x: N x 1 x T x n_mels, valid_frames[n] <= T. Padded frames never
  // influence eval-mode outputs on the valid region.
  aggregation::FrameFeatures<T> forward_features(const Tensor<T>& x,
                                                 const std::vector<int>& valid_frames, Mode mode);

  // N x n_classes logits; no softmax applied.
  Tensor<T> forward_classify(const Tensor<T>& x, const std::vector<int>& valid_frames, Mode mode);

  nn::ParameterList<T>& parameters() { return params_; }
  const nn::ParameterList<T>& parameters() const { return params_; }
  const nn::ParameterList<T>& buffers() const { return buffers_; }
  // Parameters followed by buffers; what a checkpoint stores.
  nn::ParameterList<T> state() const;

  std::size_t parameter_count() const;
  void zero_grad();

 private:
  struct Impl;
  ModelConfig cfg_;
  std::unique_ptr<Impl> impl_;
  nn::ParameterList<T> params_;
  nn::ParameterList<T> buffers_;
};

}  // namespace audiomod::model
