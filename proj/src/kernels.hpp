#pragma once

// Dense kernels shared by the tape ops. Every output element is accumulated
// in ascending index order, independent of its position in the batch, so a
// row's result never depends on which other rows it was computed with.

#include <cstddef>

namespace sessim::kernels {

// c[m x n] += a[m x k] * b[k x n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x k] += g[m x n] * b[k x n]^T
template <typename T>
void gemm_nt(const T* g, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* grow = g + i * n;
    T* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc{0};
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * g[m x n]
template <typename T>
void gemm_tn(const T* a, const T* g, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace sessim::kernels
