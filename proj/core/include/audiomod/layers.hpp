#pragma once

#include <cstdint>
#include <string>

#include "audiomod/ops.hpp"
#include "audiomod/tensor.hpp"

namespace audiomod::nn {

// Deterministic stream of per-tensor seeds derived from one model seed.
class SeedSequence {
 public:
  explicit SeedSequence(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Everything a module exposes for optimization and checkpointing.
template <typename T>
struct StateCollector {
  ParameterList<T>& params;
  ParameterList<T>& buffers;

  void param(const std::string& name, Tensor<T>& t) { params.push_back({name, t}); }
  void buffer(const std::string& name, Tensor<T>& t) { buffers.push_back({name, t}); }
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> weight;
  Tensor<T> bias;  // undefined when bias-free
  Conv2dOptions opt;

  Conv2dLayer() = default;
  Conv2dLayer(int in, int out, int kernel, Conv2dOptions o, bool with_bias, SeedSequence& seeds)
      : weight(he_normal<T>({out, in, kernel, kernel}, in * kernel * kernel, seeds.next())), opt(o) {
    weight.set_requires_grad(true);
    if (with_bias) bias = Tensor<T>::zeros({out}).set_requires_grad(true);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv2d(x, weight, bias.defined() ? &bias : nullptr, opt);
  }

  void collect(const std::string& prefix, StateCollector<T>& c) {
    c.param(prefix + ".w", weight);
    if (bias.defined()) c.param(prefix + ".b", bias);
  }
};

template <typename T>
struct BatchNormLayer {
  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormState<T> state;

  BatchNormLayer() = default;
  explicit BatchNormLayer(int channels)
      : gamma(Tensor<T>::ones({channels})), beta(Tensor<T>::zeros({channels})), state(channels) {
    gamma.set_requires_grad(true);
    beta.set_requires_grad(true);
  }

  Tensor<T> operator()(const Tensor<T>& x, Mode mode) {
    return batch_norm2d(x, gamma, beta, state, mode);
  }

  void collect(const std::string& prefix, StateCollector<T>& c) {
    c.param(prefix + ".gamma", gamma);
    c.param(prefix + ".beta", beta);
    c.buffer(prefix + ".running_mean", state.running_mean);
    c.buffer(prefix + ".running_var", state.running_var);
  }
};

template <typename T>
struct LinearLayer {
  Tensor<T> weight;
  Tensor<T> bias;  // undefined when bias-free

  LinearLayer() = default;
  LinearLayer(int in, int out, bool with_bias, SeedSequence& seeds)
      : weight(he_normal<T>({out, in}, in, seeds.next())) {
    weight.set_requires_grad(true);
    if (with_bias) bias = Tensor<T>::zeros({out}).set_requires_grad(true);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return linear(x, weight, bias.defined() ? &bias : nullptr);
  }

  void collect(const std::string& prefix, StateCollector<T>& c) {
    c.param(prefix + ".w", weight);
    if (bias.defined()) c.param(prefix + ".b", bias);
  }
};

}  // namespace audiomod::nn
