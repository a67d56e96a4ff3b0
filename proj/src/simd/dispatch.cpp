#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include "vtg/core/error.hpp"
#include "vtg/core/parallel.hpp"
#include "vtg/simd/kernels.hpp"

namespace vtg::simd {
namespace {

Isa probe() noexcept {
#if VTG_HAVE_AVX2
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::avx2;
#endif
  return Isa::scalar;
}

Isa initial_isa() noexcept {
  const Isa found = probe();
  // VTG_ISA=scalar pins the reference kernels (useful when comparing runs
  // across machines with different vector units).
  if (const char* env = std::getenv("VTG_ISA")) {
    if (std::string(env) == "scalar") return Isa::scalar;
  }
  return found;
}

std::atomic<Isa>& active() noexcept {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

template <typename T>
std::vector<T> transpose_copy(const T* src, int64_t rows, int64_t cols, int64_t ld) {
  // src is rows x cols (leading dim ld); result is cols x rows, contiguous.
  std::vector<T> out(static_cast<size_t>(rows * cols));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out[static_cast<size_t>(c * rows + r)] = src[r * ld + c];
  return out;
}

}  // namespace

Isa detected_isa() noexcept { return probe(); }

Isa active_isa() noexcept { return active().load(); }

void set_active_isa(Isa isa) {
  if (isa == Isa::avx2 && probe() != Isa::avx2) fail(ErrorCode::configuration, "AVX2/FMA kernels not available on this CPU");
  active().store(isa);
}

std::string_view isa_name(Isa isa) noexcept { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  if (name == "auto") return probe();
  fail(ErrorCode::validation, "unknown ISA '" + std::string(name) + "' (expected scalar, avx2 or auto)");
}

template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, const T* a, int64_t lda, const T* b, int64_t ldb,
          T* c, int64_t ldc, bool accumulate) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    if (!accumulate)
      for (int64_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, T(0));
    return;
  }
  std::vector<T> a_buf, b_buf;
  if (trans_a) {
    // a is stored k x m
    a_buf = transpose_copy(a, k, m, lda);
    a = a_buf.data();
    lda = k;
  }
  if (trans_b) {
    // b is stored n x k
    b_buf = transpose_copy(b, n, k, ldb);
    b = b_buf.data();
    ldb = n;
  }
  const bool vector = active_isa() == Isa::avx2;
  constexpr int64_t block = 64;
  const int64_t blocks = (n + block - 1) / block;
  const int64_t work = m * n * k;
  auto run = [&](int64_t b0, int64_t b1) {
    const int64_t j0 = b0 * block;
    const int64_t j1 = std::min(n, b1 * block);
#if VTG_HAVE_AVX2
    if (vector) {
      avx2::gemm_nn(m, j1 - j0, k, a, lda, b + j0, ldb, c + j0, ldc, accumulate);
      return;
    }
#endif
    (void)vector;
    scalar::gemm_nn(m, j1 - j0, k, a, lda, b + j0, ldb, c + j0, ldc, accumulate);
  };
  if (num_threads() > 1 && work > (1 << 18)) {
    parallel_for(blocks, run);
  } else {
    run(0, blocks);
  }
}

template <typename T>
T dot(const T* a, const T* b, int64_t n) {
#if VTG_HAVE_AVX2
  if (active_isa() == Isa::avx2) return avx2::dot(a, b, n);
#endif
  return scalar::dot(a, b, n);
}

template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t n) {
#if VTG_HAVE_AVX2
  if (active_isa() == Isa::avx2) return avx2::axpy(alpha, x, y, n);
#endif
  scalar::axpy(alpha, x, y, n);
}

#if !VTG_HAVE_AVX2
namespace avx2 {
bool compiled() noexcept { return false; }
}  // namespace avx2
#endif

template void gemm<float>(bool, bool, int64_t, int64_t, int64_t, const float*, int64_t, const float*, int64_t, float*,
                          int64_t, bool);
template void gemm<double>(bool, bool, int64_t, int64_t, int64_t, const double*, int64_t, const double*, int64_t, double*,
                           int64_t, bool);
template float dot<float>(const float*, const float*, int64_t);
template double dot<double>(const double*, const double*, int64_t);
template void axpy<float>(float, const float*, float*, int64_t);
template void axpy<double>(double, const double*, double*, int64_t);

}  // namespace vtg::simd
