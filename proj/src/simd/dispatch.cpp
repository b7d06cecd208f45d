#include <cstdlib>
#include <stdexcept>
#include <string>

#include "cfflow/simd.hpp"

namespace cfflow::simd {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(CFFLOW_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(CFFLOW_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_available(isa)) {
    throw std::invalid_argument("SIMD variant not available on this machine: " +
                                std::string(isa_name(isa)));
  }
  switch (isa) {
#if defined(CFFLOW_HAVE_AVX2)
    case Isa::avx2: return detail::avx2_table;
#endif
#if defined(CFFLOW_HAVE_NEON)
    case Isa::neon: return detail::neon_table;
#endif
    default: return detail::scalar_table;
  }
}

namespace {

const KernelTable& select() {
  if (const char* env = std::getenv("CFFLOW_SIMD")) {
    const std::string want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (want == isa_name(isa) && isa_available(isa)) return kernels_for(isa);
    }
  }
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (isa_available(isa)) return kernels_for(isa);
  }
  return detail::scalar_table;
}

}  // namespace

const KernelTable& kernels() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace cfflow::simd
