#pragma once

#include <vector>

#include "audiomod/ops.hpp"

namespace audiomod::training {

using nn::Tensor;

// Mean over the batch of -log softmax(z)[y]. z: N x K.
template <typename T>
Tensor<T> ce_loss(const Tensor<T>& logits, const std::vector<int>& labels);

// Soft targets: 1 - eps on the true class, eps / (K - 1) elsewhere. N x K.
template <typename T>
Tensor<T> smoothed_targets(const std::vector<int>& labels, int n_classes, double eps);

// Cross-entropy against smoothed_targets. eps = 0 reduces to ce_loss.
template <typename T>
Tensor<T> label_smoothing_loss(const Tensor<T>& logits, const std::vector<int>& labels, double eps);

// T^2 * KL(softmax(z_t / T) || softmax(z_s / T)), batch mean. The teacher
// logits are treated as constants; no gradient reaches them.
template <typename T>
Tensor<T> kd_loss(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits, double temperature);

// lambda * hard + (1 - lambda) * kd.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& hard, const Tensor<T>& kd, double lambda);

}  // namespace audiomod::training
