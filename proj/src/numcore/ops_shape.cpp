#include <algorithm>
#include <memory>

#include "lumos/numcore/ops.hpp"

namespace lumos {
namespace {

using detail::Node;

// Splits `shape` around `axis` into (outer, len, inner) extents.
void around_axis(const Shape& shape, std::size_t axis, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}

}  // namespace

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (numel_of(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  return dispatch(x.dtype(), [&]<class T>() {
    const auto xv = x.data<T>();
    std::vector<T> out(xv.begin(), xv.end());
    return detail::make_result("reshape", shape, std::move(out), {x}, [x](Node& self) {
      const auto& g = self.grad<T>();
      auto& gx = x.node().grad_buffer<T>();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t rank = x.rank();
  if (perm.size() != rank) throw ShapeError("permute: permutation rank mismatch");
  std::vector<bool> used(rank, false);
  for (std::size_t p : perm) {
    if (p >= rank || used[p]) throw ShapeError("permute: invalid permutation");
    used[p] = true;
  }
  const Shape& in = x.shape();
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in[perm[i]];
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  // source offset for every destination element
  const std::size_t n = x.numel();
  auto src = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*src)[i] = offset;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++counter[ax];
      offset += in_stride[perm[ax]];
      if (counter[ax] < out_shape[ax]) break;
      offset -= in_stride[perm[ax]] * counter[ax];
      counter[ax] = 0;
    }
  }
  return dispatch(x.dtype(), [&]<class T>() {
    const auto xv = x.data<T>();
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = xv[(*src)[i]];
    return detail::make_result("permute", out_shape, std::move(out), {x}, [x, src](Node& self) {
      const auto& g = self.grad<T>();
      auto& gx = x.node().grad_buffer<T>();
      for (std::size_t i = 0; i < g.size(); ++i) gx[(*src)[i]] += g[i];
    });
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    detail::require_same_dtype("concat", parts.front(), p);
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) {
      throw ShapeError("concat: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 0, inner = 0;
  around_axis(out_shape, axis, outer, inner);
  const std::size_t total = out_shape[axis];
  return dispatch(parts.front().dtype(), [&]<class T>() {
    std::vector<T> out(numel_of(out_shape));
    std::size_t pos = 0;
    for (const Tensor& p : parts) {
      const std::size_t len = p.dim(axis);
      const auto pv = p.data<T>();
      for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(pv.data() + o * len * inner, len * inner,
                    out.data() + (o * total + pos) * inner);
      }
      pos += len;
    }
    return detail::make_result("concat", out_shape, std::move(out), parts,
                                    [parts, outer, inner, total, axis](Node& self) {
      const auto& g = self.grad<T>();
      std::size_t pos = 0;
      for (const Tensor& p : parts) {
        const std::size_t len = p.dim(axis);
        if (p.requires_grad()) {
          auto& gp = p.node().grad_buffer<T>();
          for (std::size_t o = 0; o < outer; ++o) {
            const T* src = g.data() + (o * total + pos) * inner;
            T* dst = gp.data() + o * len * inner;
            for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
          }
        }
        pos += len;
      }
    });
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank() || start + length > x.dim(axis)) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of range on axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  std::size_t outer = 0, inner = 0;
  around_axis(x.shape(), axis, outer, inner);
  const std::size_t total = x.dim(axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  return dispatch(x.dtype(), [&]<class T>() {
    const auto xv = x.data<T>();
    std::vector<T> out(numel_of(out_shape));
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(xv.data() + (o * total + start) * inner, length * inner,
                  out.data() + o * length * inner);
    }
    return detail::make_result("slice", out_shape, std::move(out), {x},
                               [x, outer, inner, total, start, length](Node& self) {
      const auto& g = self.grad<T>();
      auto& gx = x.node().grad_buffer<T>();
      for (std::size_t o = 0; o < outer; ++o) {
        const T* src = g.data() + o * length * inner;
        T* dst = gx.data() + (o * total + start) * inner;
        for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src[i];
      }
    });
  });
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("stack: no inputs");
  std::vector<Tensor> lifted;
  lifted.reserve(parts.size());
  for (const Tensor& p : parts) {
    if (p.shape() != parts.front().shape()) {
      throw ShapeError("stack: shapes differ: " + shape_str(parts.front().shape()) + " vs " +
                       shape_str(p.shape()));
    }
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    lifted.push_back(reshape(p, s));
  }
  return concat(lifted, 0);
}

Tensor upsample_nearest2x(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("upsample_nearest2x: expected [N,C,H,W], got " + shape_str(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  return dispatch(x.dtype(), [&]<class T>() {
    const auto xv = x.data<T>();
    std::vector<T> out(planes * 4 * h * w);
    for (std::size_t p = 0; p < planes; ++p) {
      const T* src = xv.data() + p * h * w;
      T* dst = out.data() + p * 4 * h * w;
      for (std::size_t i = 0; i < 2 * h; ++i) {
        for (std::size_t j = 0; j < 2 * w; ++j) dst[i * 2 * w + j] = src[(i / 2) * w + j / 2];
      }
    }
    return detail::make_result("upsample_nearest2x", {x.dim(0), x.dim(1), 2 * h, 2 * w},
                               std::move(out), {x}, [x, planes, h, w](Node& self) {
      const auto& g = self.grad<T>();
      auto& gx = x.node().grad_buffer<T>();
      for (std::size_t p = 0; p < planes; ++p) {
        const T* src = g.data() + p * 4 * h * w;
        T* dst = gx.data() + p * h * w;
        for (std::size_t i = 0; i < 2 * h; ++i) {
          for (std::size_t j = 0; j < 2 * w; ++j) dst[(i / 2) * w + j / 2] += src[i * 2 * w + j];
        }
      }
    });
  });
}

Tensor embedding(const Tensor& table, const std::vector<std::int32_t>& ids) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be [V, D]");
  const std::size_t vocab = table.dim(0), width = table.dim(1);
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw ShapeError("embedding: id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
  }
  return dispatch(table.dtype(), [&]<class T>() {
    const auto tv = table.data<T>();
    std::vector<T> out(ids.size() * width);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * width, width, out.data() + i * width);
    }
    return detail::make_result("embedding", {ids.size(), width}, std::move(out), {table},
                               [table, ids, width](Node& self) {
      const auto& g = self.grad<T>();
      auto& gt = table.node().grad_buffer<T>();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        T* dst = gt.data() + static_cast<std::size_t>(ids[i]) * width;
        for (std::size_t j = 0; j < width; ++j) dst[j] += g[i * width + j];
      }
    });
  });
}

}  // namespace lumos
