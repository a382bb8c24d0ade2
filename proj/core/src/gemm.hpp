#pragma once

#include <Eigen/Dense>

namespace audiomod::nn::detail {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

// c (m x n) = or += op(a) (m x k) * op(b) (k x n), all row-major. A transposed
// operand is stored as its transpose (k x m, n x k).
template <typename T>
void gemm(int m, int n, int k, const T* a, bool trans_a, const T* b, bool trans_b, T* c, bool accumulate) {
  MapR<T> cm(c, m, n);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate) {
      cm.noalias() += lhs * rhs;
    } else {
      cm.noalias() = lhs * rhs;
    }
  };
  if (!trans_a && !trans_b) run(CMapR<T>(a, m, k), CMapR<T>(b, k, n));
  if (!trans_a && trans_b) run(CMapR<T>(a, m, k), CMapR<T>(b, n, k).transpose());
  if (trans_a && !trans_b) run(CMapR<T>(a, k, m).transpose(), CMapR<T>(b, k, n));
  if (trans_a && trans_b) run(CMapR<T>(a, k, m).transpose(), CMapR<T>(b, n, k).transpose());
}

}  // namespace audiomod::nn::detail
