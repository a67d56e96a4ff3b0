#include <vector>

#include "vtg/simd/kernels.hpp"

namespace vtg::simd::scalar {

template <typename T>
void gemm_nn(int64_t m, int64_t n, int64_t k, const T* a, int64_t lda, const T* b, int64_t ldb, T* c, int64_t ldc,
             bool accumulate) {
  std::vector<T> row(static_cast<size_t>(n));
  for (int64_t i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), T(0));
    const T* ai = a + i * lda;
    for (int64_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + p * ldb;
      for (int64_t j = 0; j < n; ++j) row[static_cast<size_t>(j)] += av * bp[j];
    }
    T* ci = c + i * ldc;
    if (accumulate) {
      for (int64_t j = 0; j < n; ++j) ci[j] += row[static_cast<size_t>(j)];
    } else {
      for (int64_t j = 0; j < n; ++j) ci[j] = row[static_cast<size_t>(j)];
    }
  }
}

template <typename T>
T dot(const T* a, const T* b, int64_t n) {
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template void gemm_nn<float>(int64_t, int64_t, int64_t, const float*, int64_t, const float*, int64_t, float*, int64_t, bool);
template void gemm_nn<double>(int64_t, int64_t, int64_t, const double*, int64_t, const double*, int64_t, double*, int64_t,
                              bool);
template float dot<float>(const float*, const float*, int64_t);
template double dot<double>(const double*, const double*, int64_t);
template void axpy<float>(float, const float*, float*, int64_t);
template void axpy<double>(double, const double*, double*, int64_t);

}  // namespace vtg::simd::scalar
