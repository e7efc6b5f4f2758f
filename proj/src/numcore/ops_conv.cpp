#include <algorithm>

#include "lumos/kernels/kernels.hpp"
#include "lumos/numcore/ops.hpp"

namespace lumos {
namespace {

using detail::Node;

struct ConvGeometry {
  std::size_t n, c, h, w;  // input
  std::size_t o, k;        // filters, kernel size
  std::size_t stride, pad;
  std::size_t ho, wo;

  std::size_t rows() const { return c * k * k; }
  std::size_t plane() const { return ho * wo; }
};

// Output columns [lo, hi) of row oh whose input column lies inside the image.
struct ValidSpan {
  std::size_t lo, hi;
};

ValidSpan valid_columns(const ConvGeometry& g, std::size_t kj) {
  const auto in = [&](std::size_t ow) {
    const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                              static_cast<std::ptrdiff_t>(g.pad);
    return iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w);
  };
  std::size_t lo = 0;
  while (lo < g.wo && !in(lo)) ++lo;
  std::size_t hi = lo;
  while (hi < g.wo && in(hi)) ++hi;
  return {lo, hi};
}

// One image: col[(c*k + ki)*k + kj][oh*wo + ow]
template <class T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t HW = g.plane();
  for (std::size_t kj = 0; kj < g.k; ++kj) {
    const ValidSpan span = valid_columns(g, kj);
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(g.pad);
    for (std::size_t c = 0; c < g.c; ++c) {
      const T* plane = x + c * g.h * g.w;
      for (std::size_t ki = 0; ki < g.k; ++ki) {
        T* row = col + ((c * g.k + ki) * g.k + kj) * HW;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          T* drow = row + oh * g.wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill_n(drow, g.wo, T(0));
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(ih) * g.w;
          std::fill(drow, drow + span.lo, T(0));
          if (g.stride == 1) {
            std::copy_n(srow + (static_cast<std::ptrdiff_t>(span.lo) + shift), span.hi - span.lo,
                        drow + span.lo);
          } else {
            for (std::size_t ow = span.lo; ow < span.hi; ++ow) {
              drow[ow] = srow[static_cast<std::ptrdiff_t>(ow * g.stride) + shift];
            }
          }
          std::fill(drow + span.hi, drow + g.wo, T(0));
        }
      }
    }
  }
}

template <class T>
void col2im_add(const ConvGeometry& g, const T* col, T* dx) {
  const std::size_t HW = g.plane();
  for (std::size_t kj = 0; kj < g.k; ++kj) {
    const ValidSpan span = valid_columns(g, kj);
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(g.pad);
    for (std::size_t c = 0; c < g.c; ++c) {
      T* plane = dx + c * g.h * g.w;
      for (std::size_t ki = 0; ki < g.k; ++ki) {
        const T* row = col + ((c * g.k + ki) * g.k + kj) * HW;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* drow = plane + static_cast<std::size_t>(ih) * g.w;
          const T* srow = row + oh * g.wo;
          for (std::size_t ow = span.lo; ow < span.hi; ++ow) {
            drow[static_cast<std::ptrdiff_t>(ow * g.stride) + shift] += srow[ow];
          }
        }
      }
    }
  }
}

ConvGeometry geometry(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw ShapeError("conv2d: expected x [N,C,H,W] and w [O,C,K,K], got " + shape_str(x.shape()) +
                     " and " + shape_str(w.shape()));
  }
  if (w.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d: channel mismatch between x " + shape_str(x.shape()) + " and w " +
                     shape_str(w.shape()));
  }
  if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d: kernel must be square");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, padding, 0, 0};
  if (g.h + 2 * padding < g.k || g.w + 2 * padding < g.k) {
    throw ShapeError("conv2d: kernel " + std::to_string(g.k) + " does not fit padded input " +
                     shape_str(x.shape()));
  }
  g.ho = (g.h + 2 * padding - g.k) / stride + 1;
  g.wo = (g.w + 2 * padding - g.k) / stride + 1;
  return g;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  detail::require_same_dtype("conv2d", x, w);
  const ConvGeometry g = geometry(x, w, stride, padding);
  if (bias.defined()) {
    detail::require_same_dtype("conv2d", x, bias);
    if (bias.rank() != 1 || bias.dim(0) != g.o) {
      throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()) + " for " +
                       std::to_string(g.o) + " filters");
    }
  }
  return dispatch(x.dtype(), [&]<class T>() {
    const std::size_t R = g.rows(), HW = g.plane();
    const std::size_t in_plane = g.c * g.h * g.w, out_plane = g.o * HW;
    std::vector<T> col(R * HW);
    std::vector<T> out(g.n * out_plane);
    const T* xd = x.data<T>().data();
    for (std::size_t n = 0; n < g.n; ++n) {
      im2col(g, xd + n * in_plane, col.data());
      T* yn = out.data() + n * out_plane;
      kernels::GemmProblem<T> p;
      p.m = g.o;
      p.n = HW;
      p.k = R;
      p.a = w.data<T>().data();
      p.a_rs = static_cast<std::ptrdiff_t>(R);
      p.a_cs = 1;
      p.b = col.data();
      p.b_rs = static_cast<std::ptrdiff_t>(HW);
      p.b_cs = 1;
      p.c = yn;
      p.ldc = static_cast<std::ptrdiff_t>(HW);
      kernels::gemm(p);
      if (bias.defined()) {
        const auto bd = bias.data<T>();
        for (std::size_t o = 0; o < g.o; ++o) {
          T* dst = yn + o * HW;
          for (std::size_t i = 0; i < HW; ++i) dst[i] += bd[o];
        }
      }
    }
    std::vector<Tensor> inputs{x, w};
    if (bias.defined()) inputs.push_back(bias);
    return detail::make_result("conv2d", {g.n, g.o, g.ho, g.wo}, std::move(out), inputs,
                               [x, w, bias, g](Node& self) {
      const std::size_t R = g.rows(), HW = g.plane();
      const std::size_t in_plane = g.c * g.h * g.w, out_plane = g.o * HW;
      const auto& gy = self.grad<T>();
      if (bias.defined() && bias.requires_grad()) {
        auto& gb = bias.node().grad_buffer<T>();
        for (std::size_t o = 0; o < g.o; ++o) {
          T s = T(0);
          for (std::size_t n = 0; n < g.n; ++n) {
            const T* src = gy.data() + n * out_plane + o * HW;
            for (std::size_t i = 0; i < HW; ++i) s += src[i];
          }
          gb[o] += s;
        }
      }
      const bool need_w = w.requires_grad(), need_x = x.requires_grad();
      std::vector<T> col(need_w ? R * HW : 0);
      std::vector<T> dcol(need_x ? R * HW : 0);
      for (std::size_t n = 0; n < g.n; ++n) {
        const T* dyn = gy.data() + n * out_plane;
        if (need_w) {
          im2col(g, x.data<T>().data() + n * in_plane, col.data());
          kernels::GemmProblem<T> p;
          p.m = g.o;
          p.n = R;
          p.k = HW;
          p.a = dyn;
          p.a_rs = static_cast<std::ptrdiff_t>(HW);
          p.a_cs = 1;
          p.b = col.data();
          p.b_rs = 1;
          p.b_cs = static_cast<std::ptrdiff_t>(HW);
          p.c = w.node().grad_buffer<T>().data();
          p.ldc = static_cast<std::ptrdiff_t>(R);
          p.accumulate = true;
          kernels::gemm(p);
        }
        if (need_x) {
          kernels::GemmProblem<T> p;
          p.m = R;
          p.n = HW;
          p.k = g.o;
          p.a = w.data<T>().data();
          p.a_rs = 1;
          p.a_cs = static_cast<std::ptrdiff_t>(R);
          p.b = dyn;
          p.b_rs = static_cast<std::ptrdiff_t>(HW);
          p.b_cs = 1;
          p.c = dcol.data();
          p.ldc = static_cast<std::ptrdiff_t>(HW);
          kernels::gemm(p);
          col2im_add(g, dcol.data(), x.node().grad_buffer<T>().data() + n * in_plane);
        }
      }
    });
  });
}

}  // namespace lumos
