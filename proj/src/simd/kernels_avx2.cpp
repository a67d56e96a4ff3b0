// Compiled with -mavx2 -mfma; only reached after the CPUID check in dispatch.cpp.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "vtg/simd/kernels.hpp"

namespace vtg::simd::avx2 {
namespace {

template <typename T>
struct Lanes;

template <>
struct Lanes<float> {
  using reg = __m256;
  static constexpr int width = 8;
  static reg zero() { return _mm256_setzero_ps(); }
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg broadcast(float v) { return _mm256_set1_ps(v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
  static float hsum(reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

template <>
struct Lanes<double> {
  using reg = __m256d;
  static constexpr int width = 4;
  static reg zero() { return _mm256_setzero_pd(); }
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg broadcast(double v) { return _mm256_set1_pd(v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static double hsum(reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

// ROWS x (2 * width) register tile over a packed, zero-padded B panel.
template <typename T, int ROWS>
inline void tile(int64_t k, const T* a, int64_t lda, const T* panel, T* c, int64_t ldc, int64_t cols, bool accumulate) {
  using L = Lanes<T>;
  constexpr int W = L::width;
  typename L::reg acc0[ROWS], acc1[ROWS];
  for (int r = 0; r < ROWS; ++r) acc0[r] = acc1[r] = L::zero();
  for (int64_t p = 0; p < k; ++p) {
    const auto b0 = L::load(panel + p * 2 * W);
    const auto b1 = L::load(panel + p * 2 * W + W);
    for (int r = 0; r < ROWS; ++r) {
      const auto av = L::broadcast(a[r * lda + p]);
      acc0[r] = L::fmadd(av, b0, acc0[r]);
      acc1[r] = L::fmadd(av, b1, acc1[r]);
    }
  }
  alignas(32) T tmp[2 * W];
  for (int r = 0; r < ROWS; ++r) {
    T* cr = c + r * ldc;
    if (cols == 2 * W) {
      if (accumulate) {
        acc0[r] = L::add(acc0[r], L::load(cr));
        acc1[r] = L::add(acc1[r], L::load(cr + W));
      }
      L::store(cr, acc0[r]);
      L::store(cr + W, acc1[r]);
    } else {
      L::store(tmp, acc0[r]);
      L::store(tmp + W, acc1[r]);
      for (int64_t j = 0; j < cols; ++j) cr[j] = accumulate ? cr[j] + tmp[j] : tmp[j];
    }
  }
}

}  // namespace

bool compiled() noexcept { return true; }

template <typename T>
void gemm_nn(int64_t m, int64_t n, int64_t k, const T* a, int64_t lda, const T* b, int64_t ldb, T* c, int64_t ldc,
             bool accumulate) {
  constexpr int64_t NB = 2 * Lanes<T>::width;
  std::vector<T> panel(static_cast<size_t>(std::max<int64_t>(k, 1) * NB));
  for (int64_t j0 = 0; j0 < n; j0 += NB) {
    const int64_t cols = std::min(NB, n - j0);
    for (int64_t p = 0; p < k; ++p) {
      const T* src = b + p * ldb + j0;
      T* dst = panel.data() + p * NB;
      int64_t j = 0;
      for (; j < cols; ++j) dst[j] = src[j];
      for (; j < NB; ++j) dst[j] = T(0);
    }
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) tile<T, 4>(k, a + i * lda, lda, panel.data(), c + i * ldc + j0, ldc, cols, accumulate);
    switch (m - i) {
      case 3: tile<T, 3>(k, a + i * lda, lda, panel.data(), c + i * ldc + j0, ldc, cols, accumulate); break;
      case 2: tile<T, 2>(k, a + i * lda, lda, panel.data(), c + i * ldc + j0, ldc, cols, accumulate); break;
      case 1: tile<T, 1>(k, a + i * lda, lda, panel.data(), c + i * ldc + j0, ldc, cols, accumulate); break;
      default: break;
    }
  }
}

template <typename T>
T dot(const T* a, const T* b, int64_t n) {
  using L = Lanes<T>;
  constexpr int W = L::width;
  auto acc0 = L::zero(), acc1 = L::zero();
  int64_t i = 0;
  for (; i + 2 * W <= n; i += 2 * W) {
    acc0 = L::fmadd(L::load(a + i), L::load(b + i), acc0);
    acc1 = L::fmadd(L::load(a + i + W), L::load(b + i + W), acc1);
  }
  T sum = L::hsum(L::add(acc0, acc1));
  for (; i < n; ++i) sum = std::fma(a[i], b[i], sum);
  return sum;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t n) {
  using L = Lanes<T>;
  constexpr int W = L::width;
  const auto av = L::broadcast(alpha);
  int64_t i = 0;
  for (; i + W <= n; i += W) L::store(y + i, L::fmadd(av, L::load(x + i), L::load(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

template void gemm_nn<float>(int64_t, int64_t, int64_t, const float*, int64_t, const float*, int64_t, float*, int64_t, bool);
template void gemm_nn<double>(int64_t, int64_t, int64_t, const double*, int64_t, const double*, int64_t, double*, int64_t,
                              bool);
template float dot<float>(const float*, const float*, int64_t);
template double dot<double>(const double*, const double*, int64_t);
template void axpy<float>(float, const float*, float*, int64_t);
template void axpy<double>(double, const double*, double*, int64_t);

}  // namespace vtg::simd::avx2
