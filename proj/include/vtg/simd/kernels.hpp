#pragma once

// Data-parallel inner loops. Every kernel has a portable scalar reference and
// an AVX2/FMA variant; the variant is chosen once at startup from CPUID and
// can be pinned for testing or reproducibility across machines.

#include <cstdint>
#include <string_view>

namespace vtg::simd {

enum class Isa { scalar, avx2 };

Isa detected_isa() noexcept;
Isa active_isa() noexcept;
// Throws vtg::Error(configuration) when the requested ISA is not supported.
void set_active_isa(Isa isa);
std::string_view isa_name(Isa isa) noexcept;
Isa parse_isa(std::string_view name);

// C[M,N] = op(A)[M,K] * op(B)[K,N] (or += when accumulate), row-major with
// leading dimensions. Each output element is a single ascending-k chain, so
// results do not depend on M, on the row's position in the block, or on the
// thread count.
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, const T* a, int64_t lda, const T* b,
          int64_t ldb, T* c, int64_t ldc, bool accumulate);

template <typename T>
T dot(const T* a, const T* b, int64_t n);

// y += alpha * x
template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t n);

// Backends are exposed for equivalence tests.
namespace scalar {
template <typename T>
void gemm_nn(int64_t m, int64_t n, int64_t k, const T* a, int64_t lda, const T* b, int64_t ldb, T* c, int64_t ldc,
             bool accumulate);
template <typename T>
T dot(const T* a, const T* b, int64_t n);
template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t n);
}  // namespace scalar

namespace avx2 {
bool compiled() noexcept;
template <typename T>
void gemm_nn(int64_t m, int64_t n, int64_t k, const T* a, int64_t lda, const T* b, int64_t ldb, T* c, int64_t ldc,
             bool accumulate);
template <typename T>
T dot(const T* a, const T* b, int64_t n);
template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t n);
}  // namespace avx2

}  // namespace vtg::simd
