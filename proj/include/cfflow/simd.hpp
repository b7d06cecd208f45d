#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel inner loops shared by the neighbor search and the flow's dense
// layers. Every kernel has a scalar reference implementation; vectorized
// variants are chosen once at runtime and must agree with the reference to
// within floating-point reassociation error.

namespace cfflow::simd {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

// Entries with |a_j - b_j| below this are treated as unchanged (exact zero term).
inline constexpr double kZeroDiff = 1e-12;

struct KernelTable {
  Isa isa;

  // c[n x m] += a[n x k] * b[m x k]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                  std::size_t k);
  // c[m x k] += a[n x m]^T * b[n x k]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                  std::size_t k);
  // c[n x k] += a[n x m] * b[m x k]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                  std::size_t k);
  // sum_j w_j * |a_j - b_j|^p, with sub-kZeroDiff differences contributing 0.
  // `w` may be null (all weights 1).
  double (*power_sum)(const double* a, const double* b, const double* w, std::size_t n, double p);
};

bool isa_available(Isa isa);

// Table for a specific ISA; throws std::invalid_argument if it is not usable here.
const KernelTable& kernels_for(Isa isa);

// Best available table. CFFLOW_SIMD=scalar|avx2|neon in the environment
// overrides the choice at first use.
const KernelTable& kernels();

namespace detail {
extern const KernelTable scalar_table;
#if defined(CFFLOW_HAVE_AVX2)
extern const KernelTable avx2_table;
#endif
#if defined(CFFLOW_HAVE_NEON)
extern const KernelTable neon_table;
#endif
}  // namespace detail

}  // namespace cfflow::simd
