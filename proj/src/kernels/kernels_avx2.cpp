// Compiled with -mavx2 -mfma; only reached when the CPU reports both.
#include <immintrin.h>

#include <algorithm>
#include <cstring>
#include <vector>

#include "lumos/kernels/kernels.hpp"

namespace lumos::kernels::detail {
namespace {

template <class T>
struct Simd;

template <>
struct Simd<float> {
  using reg = __m256;
  static constexpr int lanes = 8;
  static reg zero() { return _mm256_setzero_ps(); }
  static reg set1(float v) { return _mm256_set1_ps(v); }
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
  static float hsum(reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    lo = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, lo);
    lo = _mm_add_ss(lo, sh);
    return _mm_cvtss_f32(lo);
  }
};

template <>
struct Simd<double> {
  using reg = __m256d;
  static constexpr int lanes = 4;
  static reg zero() { return _mm256_setzero_pd(); }
  static reg set1(double v) { return _mm256_set1_pd(v); }
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
  static double hsum(reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d h = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, h));
  }
};

// Register tile: MR rows by two vectors of columns.
constexpr std::size_t kMR = 6;
constexpr std::size_t kKC = 256;
constexpr std::size_t kMC = 96;
constexpr std::size_t kNC = 1024;

template <class T>
constexpr std::size_t nr() {
  return 2 * Simd<T>::lanes;
}

// Packs rows [i0, i0+mc) x depth [p0, p0+kc) of A into MR-row panels laid out
// as panel[k][MR], zero padding the last panel.
template <class T>
void pack_a(const GemmProblem<T>& p, std::size_t i0, std::size_t mc, std::size_t p0,
            std::size_t kc, T* dst) {
  for (std::size_t ir = 0; ir < mc; ir += kMR) {
    const std::size_t rows = std::min(kMR, mc - ir);
    for (std::size_t q = 0; q < kc; ++q) {
      const T* src = p.a + static_cast<std::ptrdiff_t>(i0 + ir) * p.a_rs +
                     static_cast<std::ptrdiff_t>(p0 + q) * p.a_cs;
      std::size_t r = 0;
      for (; r < rows; ++r) dst[r] = src[static_cast<std::ptrdiff_t>(r) * p.a_rs];
      for (; r < kMR; ++r) dst[r] = T(0);
      dst += kMR;
    }
  }
}

template <class T>
void pack_b(const GemmProblem<T>& p, std::size_t p0, std::size_t kc, std::size_t j0,
            std::size_t nc, T* dst) {
  constexpr std::size_t NR = nr<T>();
  for (std::size_t jr = 0; jr < nc; jr += NR) {
    const std::size_t cols = std::min(NR, nc - jr);
    for (std::size_t q = 0; q < kc; ++q) {
      const T* src = p.b + static_cast<std::ptrdiff_t>(p0 + q) * p.b_rs +
                     static_cast<std::ptrdiff_t>(j0 + jr) * p.b_cs;
      if (p.b_cs == 1 && cols == NR) {
        std::memcpy(dst, src, NR * sizeof(T));
      } else {
        std::size_t c = 0;
        for (; c < cols; ++c) dst[c] = src[static_cast<std::ptrdiff_t>(c) * p.b_cs];
        for (; c < NR; ++c) dst[c] = T(0);
      }
      dst += NR;
    }
  }
}

// acc(MR x NR) = sum_q a[q][:] outer b[q][:]; then C tile (+)= acc.
template <class T>
void micro_kernel(std::size_t kc, const T* a, const T* b, T* c, std::ptrdiff_t ldc,
                  std::size_t rows, std::size_t cols, bool add_to_c) {
  using S = Simd<T>;
  using R = typename S::reg;
  constexpr int L = S::lanes;
  R c00 = S::zero(), c01 = S::zero(), c10 = S::zero(), c11 = S::zero();
  R c20 = S::zero(), c21 = S::zero(), c30 = S::zero(), c31 = S::zero();
  R c40 = S::zero(), c41 = S::zero(), c50 = S::zero(), c51 = S::zero();
  for (std::size_t q = 0; q < kc; ++q) {
    const R b0 = S::load(b);
    const R b1 = S::load(b + L);
    R av = S::set1(a[0]);
    c00 = S::fmadd(av, b0, c00);
    c01 = S::fmadd(av, b1, c01);
    av = S::set1(a[1]);
    c10 = S::fmadd(av, b0, c10);
    c11 = S::fmadd(av, b1, c11);
    av = S::set1(a[2]);
    c20 = S::fmadd(av, b0, c20);
    c21 = S::fmadd(av, b1, c21);
    av = S::set1(a[3]);
    c30 = S::fmadd(av, b0, c30);
    c31 = S::fmadd(av, b1, c31);
    av = S::set1(a[4]);
    c40 = S::fmadd(av, b0, c40);
    c41 = S::fmadd(av, b1, c41);
    av = S::set1(a[5]);
    c50 = S::fmadd(av, b0, c50);
    c51 = S::fmadd(av, b1, c51);
    a += kMR;
    b += 2 * L;
  }
  alignas(32) T tile[kMR][2 * L];
  S::store(tile[0], c00);
  S::store(tile[0] + L, c01);
  S::store(tile[1], c10);
  S::store(tile[1] + L, c11);
  S::store(tile[2], c20);
  S::store(tile[2] + L, c21);
  S::store(tile[3], c30);
  S::store(tile[3] + L, c31);
  S::store(tile[4], c40);
  S::store(tile[4] + L, c41);
  S::store(tile[5], c50);
  S::store(tile[5] + L, c51);
  if (cols == 2 * L) {
    for (std::size_t r = 0; r < rows; ++r) {
      T* crow = c + static_cast<std::ptrdiff_t>(r) * ldc;
      if (add_to_c) {
        S::store(crow, S::add(S::load(crow), S::load(tile[r])));
        S::store(crow + L, S::add(S::load(crow + L), S::load(tile[r] + L)));
      } else {
        S::store(crow, S::load(tile[r]));
        S::store(crow + L, S::load(tile[r] + L));
      }
    }
    return;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    T* crow = c + static_cast<std::ptrdiff_t>(r) * ldc;
    for (std::size_t j = 0; j < cols; ++j) {
      crow[j] = add_to_c ? crow[j] + tile[r][j] : tile[r][j];
    }
  }
}

template <class T>
void gemm_packed(const GemmProblem<T>& p) {
  constexpr std::size_t NR = nr<T>();
  if (p.m == 0 || p.n == 0) return;
  if (p.k == 0) {
    if (!p.accumulate) {
      for (std::size_t i = 0; i < p.m; ++i) {
        std::fill_n(p.c + static_cast<std::ptrdiff_t>(i) * p.ldc, p.n, T(0));
      }
    }
    return;
  }
  thread_local std::vector<T> apack;
  thread_local std::vector<T> bpack;
  apack.resize(((kMC + kMR - 1) / kMR) * kMR * kKC);
  bpack.resize(((kNC + NR - 1) / NR) * NR * kKC);

  for (std::size_t j0 = 0; j0 < p.n; j0 += kNC) {
    const std::size_t nc = std::min(kNC, p.n - j0);
    for (std::size_t p0 = 0; p0 < p.k; p0 += kKC) {
      const std::size_t kc = std::min(kKC, p.k - p0);
      const bool add_to_c = p.accumulate || p0 > 0;
      pack_b(p, p0, kc, j0, nc, bpack.data());
      for (std::size_t i0 = 0; i0 < p.m; i0 += kMC) {
        const std::size_t mc = std::min(kMC, p.m - i0);
        pack_a(p, i0, mc, p0, kc, apack.data());
        for (std::size_t jr = 0; jr < nc; jr += NR) {
          const std::size_t cols = std::min(NR, nc - jr);
          const T* bp = bpack.data() + (jr / NR) * NR * kc;
          for (std::size_t ir = 0; ir < mc; ir += kMR) {
            const std::size_t rows = std::min(kMR, mc - ir);
            const T* ap = apack.data() + (ir / kMR) * kMR * kc;
            T* c = p.c + static_cast<std::ptrdiff_t>(i0 + ir) * p.ldc +
                   static_cast<std::ptrdiff_t>(j0 + jr);
            micro_kernel<T>(kc, ap, bp, c, p.ldc, rows, cols, add_to_c);
          }
        }
      }
    }
  }
}

template <class T>
T dot_avx2(const T* x, const T* y, std::size_t n) {
  using S = Simd<T>;
  constexpr std::size_t L = S::lanes;
  typename S::reg s0 = S::zero(), s1 = S::zero();
  std::size_t i = 0;
  for (; i + 2 * L <= n; i += 2 * L) {
    s0 = S::fmadd(S::load(x + i), S::load(y + i), s0);
    s1 = S::fmadd(S::load(x + i + L), S::load(y + i + L), s1);
  }
  for (; i + L <= n; i += L) s0 = S::fmadd(S::load(x + i), S::load(y + i), s0);
  T s = S::hsum(S::add(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <class T>
void axpy_avx2(T alpha, const T* x, T* y, std::size_t n) {
  using S = Simd<T>;
  constexpr std::size_t L = S::lanes;
  const typename S::reg a = S::set1(alpha);
  std::size_t i = 0;
  for (; i + L <= n; i += L) S::store(y + i, S::fmadd(a, S::load(x + i), S::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t{Isa::avx2,          &gemm_packed<float>, &gemm_packed<double>,
                             &dot_avx2<float>,   &dot_avx2<double>,   &axpy_avx2<float>,
                             &axpy_avx2<double>};
  return t;
}

}  // namespace lumos::kernels::detail
