#include "lumos/kernels/kernels.hpp"

namespace lumos::kernels::detail {
namespace {

template <class T>
void gemm_ref(const GemmProblem<T>& p) {
  for (std::size_t i = 0; i < p.m; ++i) {
    T* crow = p.c + static_cast<std::ptrdiff_t>(i) * p.ldc;
    if (!p.accumulate) {
      for (std::size_t j = 0; j < p.n; ++j) crow[j] = T(0);
    }
    const T* arow = p.a + static_cast<std::ptrdiff_t>(i) * p.a_rs;
    for (std::size_t q = 0; q < p.k; ++q) {
      const T av = arow[static_cast<std::ptrdiff_t>(q) * p.a_cs];
      const T* brow = p.b + static_cast<std::ptrdiff_t>(q) * p.b_rs;
      for (std::size_t j = 0; j < p.n; ++j) {
        crow[j] += av * brow[static_cast<std::ptrdiff_t>(j) * p.b_cs];
      }
    }
  }
}

template <class T>
T dot_ref(const T* x, const T* y, std::size_t n) {
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <class T>
void axpy_ref(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{Isa::scalar,        &gemm_ref<float>, &gemm_ref<double>,
                             &dot_ref<float>,    &dot_ref<double>, &axpy_ref<float>,
                             &axpy_ref<double>};
  return t;
}

}  // namespace lumos::kernels::detail
