#include "audiomod/optimizer.hpp"

#include <cmath>

#include "audiomod/errors.hpp"

namespace audiomod::training {

template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamState& s, double lr, const AdamConfig& cfg) {
  if (param.size() != grad.size()) throw ShapeError("adam: parameter and gradient sizes differ");
  if (s.m.empty()) {
    s.m.assign(param.size(), 0.0);
    s.v.assign(param.size(), 0.0);
  }
  if (s.m.size() != param.size()) throw ShapeError("adam: state size changed between steps");
  ++s.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * g;
    s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = s.m[i] / c1;
    const double v_hat = s.v[i] / c2;
    param[i] = static_cast<T>(param[i] - lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

template <typename T>
Adam<T>::Adam(nn::ParameterList<T> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg), state_(params_.size()) {}

template <typename T>
void Adam<T>::step(double lr) {
  ++steps_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& t = params_[i].tensor;
    if (!t.has_grad()) continue;
    adam_step<T>(t.mutable_data(), t.grad(), state_[i], lr, cfg_);
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState&, double, const AdamConfig&);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState&, double, const AdamConfig&);
template class Adam<float>;
template class Adam<double>;

}  // namespace audiomod::training
