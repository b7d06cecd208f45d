#include <cmath>

#include "cfflow/simd.hpp"

namespace cfflow::simd {
namespace {

void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
             std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += ai[t] * bj[t];
      ci[j] += acc;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
             std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * m;
    const double* bi = b + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double s = ai[j];
      if (s == 0.0) continue;
      double* cj = c + j * k;
      for (std::size_t t = 0; t < k; ++t) cj[t] += s * bi[t];
    }
  }
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
             std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * m;
    double* ci = c + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double s = ai[j];
      if (s == 0.0) continue;
      const double* bj = b + j * k;
      for (std::size_t t = 0; t < k; ++t) ci[t] += s * bj[t];
    }
  }
}

double power_sum(const double* a, const double* b, const double* w, std::size_t n, double p) {
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double d = std::fabs(a[j] - b[j]);
    if (d < kZeroDiff) continue;
    double term;
    if (p == 2.0) {
      term = d * d;
    } else if (p == 1.0) {
      term = d;
    } else {
      term = std::pow(d, p);
    }
    acc += w ? w[j] * term : term;
  }
  return acc;
}

}  // namespace

namespace detail {
const KernelTable scalar_table{Isa::scalar, &gemm_nt, &gemm_tn, &gemm_nn, &power_sum};
}

}  // namespace cfflow::simd
