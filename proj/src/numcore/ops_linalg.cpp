#include "lumos/kernels/kernels.hpp"
#include "lumos/numcore/ops.hpp"

namespace lumos {
namespace {

using detail::Node;
using kernels::GemmProblem;

struct MatmulDims {
  std::size_t batch = 1;  // number of independent products
  std::size_t m = 0, k = 0, n = 0;
  bool shared_rhs = false;  // rhs is a single 2-D matrix reused across the batch
  Shape out_shape;
};

// a: [..., M, K]. b: [K, N] / [..., K, N] (nt=false) or [N, K] / [..., N, K] (nt=true).
MatmulDims matmul_dims(const char* op, const Tensor& a, const Tensor& b, bool nt) {
  detail::require_same_dtype(op, a, b);
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError(std::string(op) + ": operands must have rank >= 2, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  MatmulDims d;
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  d.m = as[as.size() - 2];
  d.k = as.back();
  const std::size_t bk = nt ? bs.back() : bs[bs.size() - 2];
  d.n = nt ? bs[bs.size() - 2] : bs.back();
  if (bk != d.k) {
    throw ShapeError(std::string(op) + ": inner dimensions differ: " + shape_str(as) + " vs " +
                     shape_str(bs));
  }
  d.out_shape = Shape(as.begin(), as.end() - 2);
  if (bs.size() == 2) {
    d.shared_rhs = true;
    d.batch = 1;
    d.m = numel_of(d.out_shape) * d.m;  // fold leading axes into rows
  } else {
    if (bs.size() != as.size() || !std::equal(as.begin(), as.end() - 2, bs.begin())) {
      throw ShapeError(std::string(op) + ": batch axes differ: " + shape_str(as) + " vs " +
                       shape_str(bs));
    }
    d.batch = numel_of(d.out_shape);
  }
  d.out_shape.push_back(as[as.size() - 2]);
  d.out_shape.push_back(d.n);
  return d;
}

template <class T>
GemmProblem<T> problem(std::size_t m, std::size_t n, std::size_t k, const T* a, std::ptrdiff_t a_rs,
                       std::ptrdiff_t a_cs, const T* b, std::ptrdiff_t b_rs, std::ptrdiff_t b_cs,
                       T* c, std::ptrdiff_t ldc, bool accumulate) {
  GemmProblem<T> p;
  p.m = m;
  p.n = n;
  p.k = k;
  p.a = a;
  p.a_rs = a_rs;
  p.a_cs = a_cs;
  p.b = b;
  p.b_rs = b_rs;
  p.b_cs = b_cs;
  p.c = c;
  p.ldc = ldc;
  p.accumulate = accumulate;
  return p;
}

Tensor matmul_impl(const char* op, const Tensor& a, const Tensor& b, bool nt) {
  const MatmulDims d = matmul_dims(op, a, b, nt);
  return dispatch(a.dtype(), [&]<class T>() {
    const std::size_t M = d.m, N = d.n, K = d.k;
    const std::ptrdiff_t sN = static_cast<std::ptrdiff_t>(N), sK = static_cast<std::ptrdiff_t>(K);
    // rhs element (k, n) strides
    const std::ptrdiff_t b_rs = nt ? 1 : sN;
    const std::ptrdiff_t b_cs = nt ? sK : 1;
    const auto av = a.data<T>();
    const auto bv = b.data<T>();
    std::vector<T> out(d.batch * M * N);
    for (std::size_t s = 0; s < d.batch; ++s) {
      const T* ap = av.data() + s * M * K;
      const T* bp = bv.data() + (d.shared_rhs ? 0 : s * K * N);
      kernels::gemm(problem<T>(M, N, K, ap, sK, 1, bp, b_rs, b_cs, out.data() + s * M * N, sN, false));
    }
    return detail::make_result(op, d.out_shape, std::move(out), {a, b}, [a, b, d, nt](Node& self) {
      const std::size_t M = d.m, N = d.n, K = d.k;
      const std::ptrdiff_t sN = static_cast<std::ptrdiff_t>(N), sK = static_cast<std::ptrdiff_t>(K);
      const auto& g = self.grad<T>();
      const auto av = a.data<T>();
      const auto bv = b.data<T>();
      for (std::size_t s = 0; s < d.batch; ++s) {
        const T* gp = g.data() + s * M * N;
        const T* ap = av.data() + s * M * K;
        const std::size_t boff = d.shared_rhs ? 0 : s * K * N;
        if (a.requires_grad()) {
          // dA[M,K] = dC[M,N] * rhs^T, rhs^T element (n, k)
          T* ga = a.node().grad_buffer<T>().data() + s * M * K;
          const std::ptrdiff_t rs = nt ? sK : 1;
          const std::ptrdiff_t cs = nt ? 1 : sN;
          kernels::gemm(problem<T>(M, K, N, gp, sN, 1, bv.data() + boff, rs, cs, ga, sK, true));
        }
        if (b.requires_grad()) {
          T* gb = b.node().grad_buffer<T>().data() + boff;
          if (nt) {
            // dB[N,K] = dC^T[N,M] * A[M,K]
            kernels::gemm(problem<T>(N, K, M, gp, 1, sN, ap, sK, 1, gb, sK, true));
          } else {
            // dB[K,N] = A^T[K,M] * dC[M,N]
            kernels::gemm(problem<T>(K, N, M, ap, 1, sK, gp, sN, 1, gb, sN, true));
          }
        }
      }
    });
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl("matmul", a, b, false); }

Tensor matmul_nt(const Tensor& a, const Tensor& b) { return matmul_impl("matmul_nt", a, b, true); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.rank() != 2) throw ShapeError("linear: weight must be [in, out], got " + shape_str(w.shape()));
  Tensor y = matmul(x, w);
  if (!bias.defined()) return y;
  if (bias.rank() != 1 || bias.dim(0) != w.dim(1)) {
    throw ShapeError("linear: bias shape " + shape_str(bias.shape()) + " for weight " +
                     shape_str(w.shape()));
  }
  return add(y, bias);
}

}  // namespace lumos
