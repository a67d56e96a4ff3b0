#include <cmath>
#include <vector>

#include "doctest.h"
#include "vtg/core/parallel.hpp"
#include "vtg/core/random.hpp"
#include "vtg/simd/kernels.hpp"

namespace simd = vtg::simd;

namespace {

template <typename T>
std::vector<T> random_vec(size_t n, uint64_t lane) {
  std::vector<T> v(n);
  vtg::RandomStream rng(5, vtg::Purpose::test, 0, static_cast<uint32_t>(lane));
  for (auto& x : v) x = static_cast<T>(rng.uniform() * 2 - 1);
  return v;
}

// Plain triple loop in long double; independent of both backends.
template <typename T>
std::vector<long double> gemm_oracle(bool ta, bool tb, int64_t m, int64_t n, int64_t k, const std::vector<T>& a,
                                     const std::vector<T>& b) {
  std::vector<long double> c(static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      long double acc = 0;
      for (int64_t p = 0; p < k; ++p) {
        const T av = ta ? a[static_cast<size_t>(p * m + i)] : a[static_cast<size_t>(i * k + p)];
        const T bv = tb ? b[static_cast<size_t>(j * k + p)] : b[static_cast<size_t>(p * n + j)];
        acc += static_cast<long double>(av) * bv;
      }
      c[static_cast<size_t>(i * n + j)] = acc;
    }
  return c;
}

struct IsaScope {
  explicit IsaScope(simd::Isa isa) : previous(simd::active_isa()) { simd::set_active_isa(isa); }
  ~IsaScope() { simd::set_active_isa(previous); }
  simd::Isa previous;
};

template <typename T>
void check_gemm_all_backends(double tol) {
  const int shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 16, 9}, {5, 17, 33}, {13, 40, 3}, {64, 70, 150}, {7, 129, 64}};
  std::vector<simd::Isa> isas{simd::Isa::scalar};
  if (simd::detected_isa() == simd::Isa::avx2) isas.push_back(simd::Isa::avx2);
  for (auto isa : isas) {
    IsaScope scope(isa);
    for (const auto& s : shapes) {
      const int64_t m = s[0], n = s[1], k = s[2];
      for (int ta = 0; ta < 2; ++ta)
        for (int tb = 0; tb < 2; ++tb)
          for (int acc = 0; acc < 2; ++acc) {
            CAPTURE(simd::isa_name(isa));
            CAPTURE(m);
            CAPTURE(n);
            CAPTURE(k);
            auto a = random_vec<T>(static_cast<size_t>(m * k), 1);
            auto b = random_vec<T>(static_cast<size_t>(k * n), 2);
            auto c = random_vec<T>(static_cast<size_t>(m * n), 3);
            const auto c0 = c;
            simd::gemm<T>(ta, tb, m, n, k, a.data(), ta ? m : k, b.data(), tb ? k : n, c.data(), n, acc);
            const auto ref = gemm_oracle<T>(ta, tb, m, n, k, a, b);
            double worst = 0;
            for (size_t i = 0; i < c.size(); ++i) {
              const long double expect = ref[i] + (acc ? c0[i] : 0);
              worst = std::max(worst, static_cast<double>(std::fabs(c[i] - expect)));
            }
            CHECK(worst <= tol * static_cast<double>(k + 1));
          }
    }
  }
}

}  // namespace

TEST_CASE("gemm matches the long-double oracle on every backend") {
  check_gemm_all_backends<float>(2e-6);
  check_gemm_all_backends<double>(1e-14);
}

TEST_CASE("avx2 and scalar gemm agree within rounding") {
  if (simd::detected_isa() != simd::Isa::avx2) return;
  const int64_t m = 37, n = 91, k = 200;
  auto a = random_vec<float>(m * k, 7);
  auto b = random_vec<float>(k * n, 8);
  std::vector<float> c_scalar(m * n), c_vec(m * n);
  simd::scalar::gemm_nn<float>(m, n, k, a.data(), k, b.data(), n, c_scalar.data(), n, false);
  simd::avx2::gemm_nn<float>(m, n, k, a.data(), k, b.data(), n, c_vec.data(), n, false);
  for (size_t i = 0; i < c_vec.size(); ++i) CHECK(c_vec[i] == doctest::Approx(c_scalar[i]).epsilon(1e-4));
}

TEST_CASE("each gemm row is independent of the rows around it") {
  // Row r of a 13-row product must equal the same row computed alone, bit for bit.
  for (auto isa : {simd::Isa::scalar, simd::detected_isa()}) {
    IsaScope scope(isa);
    const int64_t m = 13, n = 37, k = 29;
    auto a = random_vec<float>(m * k, 9);
    auto b = random_vec<float>(k * n, 10);
    std::vector<float> full(m * n);
    simd::gemm<float>(false, false, m, n, k, a.data(), k, b.data(), n, full.data(), n, false);
    for (int64_t r = 0; r < m; ++r) {
      std::vector<float> row(n);
      simd::gemm<float>(false, false, 1, n, k, a.data() + r * k, k, b.data(), n, row.data(), n, false);
      for (int64_t j = 0; j < n; ++j) REQUIRE(row[j] == full[r * n + j]);
    }
  }
}

TEST_CASE("gemm output does not depend on the thread count") {
  const int64_t m = 70, n = 300, k = 90;
  auto a = random_vec<float>(m * k, 11);
  auto b = random_vec<float>(k * n, 12);
  std::vector<float> one(m * n), four(m * n);
  vtg::set_num_threads(1);
  simd::gemm<float>(false, false, m, n, k, a.data(), k, b.data(), n, one.data(), n, false);
  vtg::set_num_threads(4);
  simd::gemm<float>(false, false, m, n, k, a.data(), k, b.data(), n, four.data(), n, false);
  vtg::set_num_threads(1);
  CHECK(one == four);
}

TEST_CASE("dot and axpy backends agree") {
  for (int64_t n : {0, 1, 7, 16, 17, 100, 1001}) {
    auto x = random_vec<double>(static_cast<size_t>(n), 13);
    auto y = random_vec<double>(static_cast<size_t>(n), 14);
    long double ref = 0;
    for (int64_t i = 0; i < n; ++i) ref += static_cast<long double>(x[i]) * y[i];
    CHECK(simd::scalar::dot(x.data(), y.data(), n) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-12));
    if (simd::detected_isa() == simd::Isa::avx2) {
      CHECK(simd::avx2::dot(x.data(), y.data(), n) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-12));
      auto y1 = y, y2 = y;
      simd::scalar::axpy(0.37, x.data(), y1.data(), n);
      simd::avx2::axpy(0.37, x.data(), y2.data(), n);
      for (int64_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("isa selection") {
  CHECK(simd::parse_isa("scalar") == simd::Isa::scalar);
  CHECK_THROWS(simd::parse_isa("sse9"));
  simd::set_active_isa(simd::Isa::scalar);
  CHECK(simd::active_isa() == simd::Isa::scalar);
  simd::set_active_isa(simd::detected_isa());
}
