#include <immintrin.h>

#include <cmath>
#include <cstdint>

#include "cfflow/simd.hpp"

namespace cfflow::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// [sum(a0), sum(a1), sum(a2), sum(a3)]
inline __m256d hsum4(__m256d a0, __m256d a1, __m256d a2, __m256d a3) {
  const __m256d t0 = _mm256_hadd_pd(a0, a1);
  const __m256d t1 = _mm256_hadd_pd(a2, a3);
  const __m256d lo = _mm256_permute2f128_pd(t0, t1, 0x20);
  const __m256d hi = _mm256_permute2f128_pd(t0, t1, 0x31);
  return _mm256_add_pd(lo, hi);
}

// Cephes-style exp for finite arguments well inside the double range.
inline __m256d exp_pd(__m256d x) {
  const __m256d hi = _mm256_set1_pd(708.0);
  const __m256d lo = _mm256_set1_pd(-708.0);
  x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125E-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212E-6);

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(n, c1, x);
  x = _mm256_fnmadd_pd(n, c2, x);

  const __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_set1_pd(1.26177193074810590878E-4);
  px = _mm256_fmadd_pd(px, xx, _mm256_set1_pd(3.02994407707441961300E-2));
  px = _mm256_fmadd_pd(px, xx, _mm256_set1_pd(9.99999999999999999910E-1));
  px = _mm256_mul_pd(px, x);

  __m256d qx = _mm256_set1_pd(3.00198505138664455042E-6);
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.52448340349684104192E-3));
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.27265548208155028766E-1));
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.00000000000000000009E0));

  __m256d r = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  r = _mm256_fmadd_pd(_mm256_set1_pd(2.0), r, _mm256_set1_pd(1.0));

  // Scale by 2^n through the exponent field.
  const __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  n64 = _mm256_add_epi64(n64, _mm256_set1_epi64x(1023));
  n64 = _mm256_slli_epi64(n64, 52);
  return _mm256_mul_pd(r, _mm256_castsi256_pd(n64));
}

// Cephes-style natural log for positive normal arguments.
inline __m256d log_pd(__m256d x) {
  const __m256i bits = _mm256_castpd_si256(x);
  const __m256i exp_bits = _mm256_and_si256(_mm256_srli_epi64(bits, 52), _mm256_set1_epi64x(0x7ff));
  // Exponent as double via the 2^52 magic-number trick.
  const __m256d magic = _mm256_set1_pd(4503599627370496.0);
  __m256d e = _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(exp_bits, _mm256_castpd_si256(magic))),
                            magic);
  e = _mm256_sub_pd(e, _mm256_set1_pd(1022.0));
  // Mantissa in [0.5, 1).
  const __m256i mant = _mm256_or_si256(_mm256_and_si256(bits, _mm256_set1_epi64x(0x800fffffffffffffLL)),
                                       _mm256_set1_epi64x(0x3fe0000000000000LL));
  __m256d m = _mm256_castsi256_pd(mant);

  const __m256d sqrth = _mm256_set1_pd(0.70710678118654752440);
  const __m256d small = _mm256_cmp_pd(m, sqrth, _CMP_LT_OQ);
  e = _mm256_sub_pd(e, _mm256_and_pd(small, _mm256_set1_pd(1.0)));
  // m < sqrt(1/2): 2m - 1, otherwise m - 1
  m = _mm256_sub_pd(_mm256_add_pd(m, _mm256_and_pd(small, m)), _mm256_set1_pd(1.0));

  const __m256d z = _mm256_mul_pd(m, m);

  __m256d p = _mm256_set1_pd(1.01875663804580931796E-4);
  p = _mm256_fmadd_pd(p, m, _mm256_set1_pd(4.97494994976747001425E-1));
  p = _mm256_fmadd_pd(p, m, _mm256_set1_pd(4.70579119878881725854E0));
  p = _mm256_fmadd_pd(p, m, _mm256_set1_pd(1.44989225341610930846E1));
  p = _mm256_fmadd_pd(p, m, _mm256_set1_pd(1.79368678507819816313E1));
  p = _mm256_fmadd_pd(p, m, _mm256_set1_pd(7.70838733755885391666E0));

  __m256d q = _mm256_add_pd(m, _mm256_set1_pd(1.12873587189167450590E1));
  q = _mm256_fmadd_pd(q, m, _mm256_set1_pd(4.52279145837532221105E1));
  q = _mm256_fmadd_pd(q, m, _mm256_set1_pd(8.29875266912776603211E1));
  q = _mm256_fmadd_pd(q, m, _mm256_set1_pd(7.11544750618345436940E1));
  q = _mm256_fmadd_pd(q, m, _mm256_set1_pd(2.31251620126765340583E1));

  __m256d y = _mm256_mul_pd(m, _mm256_div_pd(_mm256_mul_pd(z, p), q));
  y = _mm256_fnmadd_pd(e, _mm256_set1_pd(2.121944400546905827679e-4), y);
  y = _mm256_fnmadd_pd(_mm256_set1_pd(0.5), z, y);
  __m256d r = _mm256_add_pd(m, y);
  r = _mm256_fmadd_pd(e, _mm256_set1_pd(0.693359375), r);
  return r;
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
             std::size_t k) {
  const std::size_t k4 = k & ~std::size_t{3};
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    std::size_t j = 0;
    for (; j + 4 <= m; j += 4) {
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      for (std::size_t t = 0; t < k4; t += 4) {
        const __m256d av = _mm256_loadu_pd(ai + t);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + t), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + t), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + t), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + t), s3);
      }
      __m256d sums = hsum4(s0, s1, s2, s3);
      if (k4 < k) {
        alignas(32) double tail[4] = {0.0, 0.0, 0.0, 0.0};
        for (std::size_t t = k4; t < k; ++t) {
          tail[0] += ai[t] * b0[t];
          tail[1] += ai[t] * b1[t];
          tail[2] += ai[t] * b2[t];
          tail[3] += ai[t] * b3[t];
        }
        sums = _mm256_add_pd(sums, _mm256_load_pd(tail));
      }
      _mm256_storeu_pd(ci + j, _mm256_add_pd(_mm256_loadu_pd(ci + j), sums));
    }
    for (; j < m; ++j) {
      const double* bj = b + j * k;
      __m256d s = _mm256_setzero_pd();
      for (std::size_t t = 0; t < k4; t += 4) {
        s = _mm256_fmadd_pd(_mm256_loadu_pd(ai + t), _mm256_loadu_pd(bj + t), s);
      }
      double acc = hsum(s);
      for (std::size_t t = k4; t < k; ++t) acc += ai[t] * bj[t];
      ci[j] += acc;
    }
  }
}

inline void axpy(double s, const double* x, double* y, std::size_t k) {
  const __m256d sv = _mm256_set1_pd(s);
  std::size_t t = 0;
  for (; t + 4 <= k; t += 4) {
    _mm256_storeu_pd(y + t, _mm256_fmadd_pd(sv, _mm256_loadu_pd(x + t), _mm256_loadu_pd(y + t)));
  }
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

double power_sum(const double* a, const double* b, const double* w, std::size_t n, double p) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  const __m256d zero_diff = _mm256_set1_pd(kZeroDiff);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d pv = _mm256_set1_pd(p);
  const int mode = p == 2.0 ? 2 : (p == 1.0 ? 1 : 0);

  __m256d acc = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d d = _mm256_andnot_pd(sign, _mm256_sub_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j)));
    const __m256d live = _mm256_cmp_pd(d, zero_diff, _CMP_GE_OQ);
    __m256d term;
    if (mode == 2) {
      term = _mm256_mul_pd(d, d);
    } else if (mode == 1) {
      term = d;
    } else {
      const __m256d safe = _mm256_blendv_pd(one, d, live);
      term = exp_pd(_mm256_mul_pd(pv, log_pd(safe)));
    }
    term = _mm256_and_pd(term, live);
    if (w) term = _mm256_mul_pd(term, _mm256_loadu_pd(w + j));
    acc = _mm256_add_pd(acc, term);
  }
  double total = hsum(acc);
  for (; j < n; ++j) {
    const double d = std::fabs(a[j] - b[j]);
    if (d < kZeroDiff) continue;
    const double term = mode == 2 ? d * d : (mode == 1 ? d : std::pow(d, p));
    total += w ? w[j] * term : term;
  }
  return total;
}

}  // namespace

namespace detail {
const KernelTable avx2_table{Isa::avx2, &gemm_nt, &gemm_tn, &gemm_nn, &power_sum};
}

}  // namespace cfflow::simd
