#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "audiomod/errors.hpp"
#include "audiomod/tensor.hpp"

namespace audiomod::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares reverse-mode gradients of a scalar function against central
// differences (f(x + eps e_i) - f(x - eps e_i)) / 2eps for every element of
// every input. Relative error uses max(|a|, |n|, 1e-8) as the denominator.
// Not meaningful at non-differentiable points (ReLU kinks, max ties).
inline GradCheckResult gradient_check(const std::function<Tensor<double>()>& f,
                                      std::vector<Tensor<double>> inputs, double eps = 1e-5) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  {
    const Tensor<double> y = f();
    if (y.numel() != 1) throw ContractError("gradient_check needs a scalar-valued function");
    y.backward();
  }

  GradCheckResult res;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& in = inputs[k];
    const std::vector<double> analytic = in.has_grad()
        ? std::vector<double>(in.grad().begin(), in.grad().end())
        : std::vector<double>(in.numel(), 0.0);
    auto values = in.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = f().item();
      values[i] = saved - eps;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      if (rel > res.max_rel_error || (k == 0 && i == 0)) {
        res = {rel, k, i, analytic[i], numeric};
      }
    }
  }
  return res;
}

// Single-input form: f maps x to a scalar.
inline double gradient_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                             const Tensor<double>& x, double eps = 1e-5) {
  return gradient_check([&] { return f(x); }, std::vector<Tensor<double>>{x}, eps).max_rel_error;
}

}  // namespace audiomod::nn
