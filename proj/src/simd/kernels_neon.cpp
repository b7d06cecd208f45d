#include <arm_neon.h>

#include <cmath>

#include "cfflow/simd.hpp"

namespace cfflow::simd {
namespace {

void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
             std::size_t k) {
  const std::size_t k2 = k & ~std::size_t{1};
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b + j * k;
      float64x2_t s = vdupq_n_f64(0.0);
      for (std::size_t t = 0; t < k2; t += 2) s = vfmaq_f64(s, vld1q_f64(ai + t), vld1q_f64(bj + t));
      double acc = vaddvq_f64(s);
      for (std::size_t t = k2; t < k; ++t) acc += ai[t] * bj[t];
      ci[j] += acc;
    }
  }
}

inline void axpy(double s, const double* x, double* y, std::size_t k) {
  const float64x2_t sv = vdupq_n_f64(s);
  std::size_t t = 0;
  for (; t + 2 <= k; t += 2) vst1q_f64(y + t, vfmaq_f64(vld1q_f64(y + t), sv, vld1q_f64(x + t)));
  for (; t < k; ++t) y[t] += s * x[t];
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
             std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * m;
    const double* bi = b + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      if (ai[j] == 0.0) continue;
      axpy(ai[j], bi, c + j * k, k);
    }
  }
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
             std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * m;
    double* ci = c + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      if (ai[j] == 0.0) continue;
      axpy(ai[j], b + j * k, ci, k);
    }
  }
}

// Vectorized for p in {1, 2}; other exponents go through std::pow per lane.
double power_sum(const double* a, const double* b, const double* w, std::size_t n, double p) {
  if (p != 2.0 && p != 1.0) return detail::scalar_table.power_sum(a, b, w, n, p);
  const float64x2_t zero_diff = vdupq_n_f64(kZeroDiff);
  const float64x2_t zero = vdupq_n_f64(0.0);
  float64x2_t acc = zero;
  std::size_t j = 0;
  for (; j + 2 <= n; j += 2) {
    const float64x2_t d = vabsq_f64(vsubq_f64(vld1q_f64(a + j), vld1q_f64(b + j)));
    float64x2_t term = p == 2.0 ? vmulq_f64(d, d) : d;
    term = vbslq_f64(vcgeq_f64(d, zero_diff), term, zero);
    if (w) term = vmulq_f64(term, vld1q_f64(w + j));
    acc = vaddq_f64(acc, term);
  }
  double total = vaddvq_f64(acc);
  for (; j < n; ++j) {
    const double d = std::fabs(a[j] - b[j]);
    if (d < kZeroDiff) continue;
    const double term = p == 2.0 ? d * d : d;
    total += w ? w[j] * term : term;
  }
  return total;
}

}  // namespace

namespace detail {
const KernelTable neon_table{Isa::neon, &gemm_nt, &gemm_tn, &gemm_nn, &power_sum};
}

}  // namespace cfflow::simd
