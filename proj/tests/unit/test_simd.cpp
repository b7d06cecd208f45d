#include <cmath>
#include <random>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "cfflow/simd.hpp"
#include "doctest.h"

using namespace cfflow;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<simd::Isa> vector_isas() {
  std::vector<simd::Isa> out;
  for (auto isa : {simd::Isa::avx2, simd::Isa::neon}) {
    if (simd::isa_available(isa)) out.push_back(isa);
  }
  return out;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(tol));
}

}  // namespace

TEST_SUITE("simd") {
  TEST_CASE("scalar table is always available and named") {
    CHECK(simd::isa_available(simd::Isa::scalar));
    CHECK(simd::kernels_for(simd::Isa::scalar).isa == simd::Isa::scalar);
    CHECK(simd::isa_name(simd::Isa::avx2) == "avx2");
  }

  TEST_CASE("unavailable ISA is rejected") {
    for (auto isa : {simd::Isa::avx2, simd::Isa::neon}) {
      if (!simd::isa_available(isa)) CHECK_THROWS_AS(simd::kernels_for(isa), std::invalid_argument);
    }
  }

  TEST_CASE("gemm variants agree with the scalar reference") {
    std::mt19937_64 rng(11);
    const auto& ref = simd::kernels_for(simd::Isa::scalar);
    for (auto isa : vector_isas()) {
      const auto& vec = simd::kernels_for(isa);
      using Shape = std::tuple<std::size_t, std::size_t, std::size_t>;
      for (auto [n, m, k] : std::vector<Shape>{{1, 1, 1}, {3, 5, 7}, {8, 16, 4}, {13, 9, 33}, {64, 17, 31}}) {
        const auto a = random_vec(n * k, rng), b = random_vec(m * k, rng);
        std::vector<double> c0 = random_vec(n * m, rng), c1 = c0;
        ref.gemm_nt(a.data(), b.data(), c0.data(), n, m, k);
        vec.gemm_nt(a.data(), b.data(), c1.data(), n, m, k);
        check_close(c0, c1, 1e-12);

        const auto a2 = random_vec(n * m, rng), b2 = random_vec(n * k, rng);
        std::vector<double> d0 = random_vec(m * k, rng), d1 = d0;
        ref.gemm_tn(a2.data(), b2.data(), d0.data(), n, m, k);
        vec.gemm_tn(a2.data(), b2.data(), d1.data(), n, m, k);
        check_close(d0, d1, 1e-12);

        const auto a3 = random_vec(n * m, rng), b3 = random_vec(m * k, rng);
        std::vector<double> e0 = random_vec(n * k, rng), e1 = e0;
        ref.gemm_nn(a3.data(), b3.data(), e0.data(), n, m, k);
        vec.gemm_nn(a3.data(), b3.data(), e1.data(), n, m, k);
        check_close(e0, e1, 1e-12);
      }
    }
  }

  TEST_CASE("scalar gemm_nt matches a textbook triple loop") {
    std::mt19937_64 rng(5);
    const std::size_t n = 4, m = 3, k = 6;
    const auto a = random_vec(n * k, rng), b = random_vec(m * k, rng);
    std::vector<double> c(n * m, 1.0);
    simd::kernels_for(simd::Isa::scalar).gemm_nt(a.data(), b.data(), c.data(), n, m, k);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double s = 1.0;
        for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[j * k + t];
        CHECK(c[i * m + j] == doctest::Approx(s).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("power_sum variants agree across exponents, weights and tails") {
    std::mt19937_64 rng(17);
    const auto& ref = simd::kernels_for(simd::Isa::scalar);
    for (auto isa : vector_isas()) {
      const auto& vec = simd::kernels_for(isa);
      for (std::size_t n : {1u, 3u, 4u, 7u, 16u, 37u}) {
        auto a = random_vec(n, rng), b = random_vec(n, rng), w = random_vec(n, rng);
        for (auto& x : w) x = std::fabs(x) + 0.5;
        b[0] = a[0];                // exact zero difference
        if (n > 2) b[2] = a[2] + 1e-14;  // below the zero threshold
        for (double p : {0.01, 0.25, 0.5, 1.0, 2.0, 3.0}) {
          CHECK(vec.power_sum(a.data(), b.data(), nullptr, n, p) ==
                doctest::Approx(ref.power_sum(a.data(), b.data(), nullptr, n, p)).epsilon(1e-12));
          CHECK(vec.power_sum(a.data(), b.data(), w.data(), n, p) ==
                doctest::Approx(ref.power_sum(a.data(), b.data(), w.data(), n, p)).epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("power_sum ignores sub-threshold differences") {
    const std::vector<double> a{1.0, 2.0}, b{1.0 + 1e-13, 4.0};
    for (double p : {0.01, 2.0}) {
      CHECK(simd::kernels_for(simd::Isa::scalar).power_sum(a.data(), b.data(), nullptr, 2, p) ==
            doctest::Approx(std::pow(2.0, p)));
    }
  }
}
