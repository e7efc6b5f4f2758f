// AArch64 only; NEON is architecturally guaranteed there.
#include <arm_neon.h>

#include "lumos/kernels/kernels.hpp"

namespace lumos::kernels::detail {
namespace {

float dot_neon_f32(const float* x, const float* y, std::size_t n) {
  float32x4_t s0 = vdupq_n_f32(0.0f), s1 = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = vfmaq_f32(s0, vld1q_f32(x + i), vld1q_f32(y + i));
    s1 = vfmaq_f32(s1, vld1q_f32(x + i + 4), vld1q_f32(y + i + 4));
  }
  float s = vaddvq_f32(vaddq_f32(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double dot_neon_f64(const double* x, const double* y, std::size_t n) {
  float64x2_t s0 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) s0 = vfmaq_f64(s0, vld1q_f64(x + i), vld1q_f64(y + i));
  double s = vaddvq_f64(s0);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_neon_f32(float alpha, const float* x, float* y, std::size_t n) {
  const float32x4_t a = vdupq_n_f32(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), a, vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_neon_f64(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t a = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), a, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Row-broadcast formulation: each row of C accumulates alpha*B[q,:] runs. B rows
// must be contiguous for the vector path; other layouts fall back to scalar.
template <class T>
void gemm_neon(const GemmProblem<T>& p) {
  for (std::size_t i = 0; i < p.m; ++i) {
    T* crow = p.c + static_cast<std::ptrdiff_t>(i) * p.ldc;
    if (!p.accumulate) {
      for (std::size_t j = 0; j < p.n; ++j) crow[j] = T(0);
    }
    const T* arow = p.a + static_cast<std::ptrdiff_t>(i) * p.a_rs;
    for (std::size_t q = 0; q < p.k; ++q) {
      const T av = arow[static_cast<std::ptrdiff_t>(q) * p.a_cs];
      const T* brow = p.b + static_cast<std::ptrdiff_t>(q) * p.b_rs;
      if (p.b_cs == 1) {
        if constexpr (sizeof(T) == 4) {
          axpy_neon_f32(av, brow, crow, p.n);
        } else {
          axpy_neon_f64(av, brow, crow, p.n);
        }
      } else {
        for (std::size_t j = 0; j < p.n; ++j) {
          crow[j] += av * brow[static_cast<std::ptrdiff_t>(j) * p.b_cs];
        }
      }
    }
  }
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable t{Isa::neon,       &gemm_neon<float>, &gemm_neon<double>,
                             &dot_neon_f32,   &dot_neon_f64,     &axpy_neon_f32,
                             &axpy_neon_f64};
  return t;
}

}  // namespace lumos::kernels::detail
