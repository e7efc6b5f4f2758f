#pragma once

// Dense arithmetic kernels with a portable scalar reference and SIMD variants
// selected once at runtime. Every variant must agree with the scalar reference
// to within floating-point reassociation error (see tests/kernels_test.cpp).

#include <cstddef>
#include <string_view>

namespace lumos::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

/// C[m,n] (+)= A[m,k] * B[k,n]. A and B are addressed through independent row
/// and column strides so transposed operands need no copy; C is row-major.
template <class T>
struct GemmProblem {
  std::size_t m = 0, n = 0, k = 0;
  const T* a = nullptr;
  std::ptrdiff_t a_rs = 0, a_cs = 1;
  const T* b = nullptr;
  std::ptrdiff_t b_rs = 0, b_cs = 1;
  T* c = nullptr;
  std::ptrdiff_t ldc = 0;
  bool accumulate = false;
};

struct KernelTable {
  Isa isa = Isa::scalar;
  void (*gemm_f32)(const GemmProblem<float>&) = nullptr;
  void (*gemm_f64)(const GemmProblem<double>&) = nullptr;
  float (*dot_f32)(const float*, const float*, std::size_t) = nullptr;
  double (*dot_f64)(const double*, const double*, std::size_t) = nullptr;
  // y += alpha * x
  void (*axpy_f32)(float, const float*, float*, std::size_t) = nullptr;
  void (*axpy_f64)(double, const double*, double*, std::size_t) = nullptr;
};

bool available(Isa isa);

/// Table for a specific ISA. Throws std::runtime_error if the CPU or the build
/// does not support it.
const KernelTable& table(Isa isa);

/// Best available table, chosen on first call. LUMOS_KERNELS=scalar|avx2|neon
/// in the environment forces a choice.
const KernelTable& active();

/// Overrides the active table (tests and benchmarks).
void set_active(Isa isa);

template <class T>
inline void gemm(const GemmProblem<T>& p) {
  if constexpr (sizeof(T) == 4) {
    active().gemm_f32(p);
  } else {
    active().gemm_f64(p);
  }
}

template <class T>
inline T dot(const T* x, const T* y, std::size_t n) {
  if constexpr (sizeof(T) == 4) {
    return active().dot_f32(x, y, n);
  } else {
    return active().dot_f64(x, y, n);
  }
}

template <class T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  if constexpr (sizeof(T) == 4) {
    active().axpy_f32(alpha, x, y, n);
  } else {
    active().axpy_f64(alpha, x, y, n);
  }
}

namespace detail {
const KernelTable& scalar_table();
#if defined(LUMOS_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(LUMOS_HAVE_NEON)
const KernelTable& neon_table();
#endif
}  // namespace detail

}  // namespace lumos::kernels
