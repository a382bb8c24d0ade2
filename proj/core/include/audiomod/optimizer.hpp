#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "audiomod/tensor.hpp"

namespace audiomod::training {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update of `param` in place.
template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamState& state, double lr,
               const AdamConfig& cfg = {});

template <typename T>
class Adam {
 public:
  explicit Adam(nn::ParameterList<T> params, AdamConfig cfg = {});

  // Parameters without a gradient this step are left untouched.
  void step(double lr);
  void zero_grad();
  std::int64_t steps() const { return steps_; }

 private:
  nn::ParameterList<T> params_;
  AdamConfig cfg_;
  std::vector<AdamState> state_;
  std::int64_t steps_ = 0;
};

}  // namespace audiomod::training
