#include "audiomod/losses.hpp"

#include <cmath>
#include <string>

#include "audiomod/errors.hpp"

namespace audiomod::training {

namespace {

template <typename T>
void check_logits(const Tensor<T>& z, std::size_t n_labels) {
  if (z.ndim() != 2) throw ShapeError("logits must be N x K, got " + nn::shape_str(z.shape()));
  if (static_cast<std::size_t>(z.dim(0)) != n_labels)
    throw ShapeError("logits batch " + std::to_string(z.dim(0)) + " != " + std::to_string(n_labels) + " labels");
}

// -(1/N) sum q * log_softmax(z)
template <typename T>
Tensor<T> soft_ce(const Tensor<T>& logits, const Tensor<T>& q) {
  const T inv_n = T(1) / static_cast<T>(logits.dim(0));
  return nn::scale(nn::sum_all(nn::mul(nn::log_softmax(logits), q)), -inv_n);
}

}  // namespace

template <typename T>
Tensor<T> smoothed_targets(const std::vector<int>& labels, int n_classes, double eps) {
  if (n_classes < 2) throw ConfigKeyError("model.n_classes", "must be >= 2");
  if (!(eps >= 0.0 && eps < 1.0)) throw ConfigKeyError("train.label_smoothing_eps", "must be in [0, 1)");
  const int n = static_cast<int>(labels.size());
  const T off = static_cast<T>(eps / (n_classes - 1));
  const T on = static_cast<T>(1.0 - eps);
  Tensor<T> q({n, n_classes}, off);
  auto v = q.mutable_data();
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes)
      throw DataError("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(n_classes) + ")");
    v[static_cast<std::size_t>(i) * n_classes + labels[i]] = on;
  }
  return q;
}

template <typename T>
Tensor<T> ce_loss(const Tensor<T>& logits, const std::vector<int>& labels) {
  check_logits(logits, labels.size());
  return soft_ce(logits, smoothed_targets<T>(labels, logits.dim(1), 0.0));
}

template <typename T>
Tensor<T> label_smoothing_loss(const Tensor<T>& logits, const std::vector<int>& labels, double eps) {
  check_logits(logits, labels.size());
  return soft_ce(logits, smoothed_targets<T>(labels, logits.dim(1), eps));
}

template <typename T>
Tensor<T> kd_loss(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits, double temperature) {
  if (!(temperature > 0.0)) throw ConfigKeyError("kd.temperature", "must be > 0");
  if (student_logits.shape() != teacher_logits.shape())
    throw ShapeError("student " + nn::shape_str(student_logits.shape()) + " vs teacher " +
                     nn::shape_str(teacher_logits.shape()));
  check_logits(student_logits, static_cast<std::size_t>(student_logits.dim(0)));
  const T inv_t = static_cast<T>(1.0 / temperature);

  Tensor<T> p_t, log_p_t;
  {
    nn::NoGradGuard no_grad;
    const Tensor<T> scaled = nn::scale(teacher_logits.detach(), inv_t);
    log_p_t = nn::log_softmax(scaled);
    p_t = nn::softmax(scaled);
  }
  // sum p_t log p_t, with 0 log 0 = 0
  double neg_entropy = 0.0;
  for (std::size_t i = 0; i < p_t.numel(); ++i)
    if (p_t.data()[i] > T(0)) neg_entropy += static_cast<double>(p_t.data()[i]) * log_p_t.data()[i];

  const Tensor<T> cross = nn::sum_all(nn::mul(nn::log_softmax(nn::scale(student_logits, inv_t)), p_t));
  const T factor = static_cast<T>(temperature * temperature / student_logits.dim(0));
  return nn::scale(nn::add_scalar(nn::scale(cross, T(-1)), static_cast<T>(neg_entropy)), factor);
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& hard, const Tensor<T>& kd, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigKeyError("kd.lambda", "must be in [0, 1]");
  return nn::add(nn::scale(hard, static_cast<T>(lambda)), nn::scale(kd, static_cast<T>(1.0 - lambda)));
}

#define AUDIOMOD_INSTANTIATE(T)                                                              \
  template Tensor<T> ce_loss(const Tensor<T>&, const std::vector<int>&);                     \
  template Tensor<T> smoothed_targets<T>(const std::vector<int>&, int, double);              \
  template Tensor<T> label_smoothing_loss(const Tensor<T>&, const std::vector<int>&, double); \
  template Tensor<T> kd_loss(const Tensor<T>&, const Tensor<T>&, double);                    \
  template Tensor<T> total_loss(const Tensor<T>&, const Tensor<T>&, double);

AUDIOMOD_INSTANTIATE(float)
AUDIOMOD_INSTANTIATE(double)

#undef AUDIOMOD_INSTANTIATE

}  // namespace audiomod::training
