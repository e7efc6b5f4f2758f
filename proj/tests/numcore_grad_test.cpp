#include <gtest/gtest.h>

#include "lumos/numcore/ops.hpp"
#include "lumos/numcore/rng.hpp"
#include "support/gradcheck.hpp"

namespace lumos {
namespace {

using testing::grad_check;
using testing::project;

constexpr double kTol = 1e-5;

Tensor var(Rng& rng, const Shape& shape, double stddev = 1.0) {
  Tensor t = rng.normal_tensor(shape, DType::f64, stddev);
  t.set_requires_grad(true);
  return t;
}

// Each check projects the op output onto a fixed random direction and runs
// over a few random shapes.
class GradCheck : public ::testing::TestWithParam<std::uint64_t> {
 protected:
  Rng rng{GetParam()};
  std::size_t dim(std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }
  void expect_ok(const std::function<Tensor()>& out, const std::vector<Tensor>& inputs) {
    Tensor probe = out();
    const Tensor r = rng.normal_tensor(probe.shape(), DType::f64);
    const auto res = grad_check([&] { return project(out(), r); }, inputs);
    EXPECT_LT(res.max_rel_error, kTol) << "worst at " << res.worst;
  }
};

TEST_P(GradCheck, ElementwiseAndBroadcast) {
  const std::size_t m = dim(1, 5), n = dim(1, 6);
  Tensor a = var(rng, {m, n}), b = var(rng, {n}), c = var(rng, {m, 1});
  expect_ok([&] { return mul(add(a, b), sub(a, c)); }, {a, b, c});
  expect_ok([&] { return add_scalar(scale(a, -1.5), 0.25); }, {a});
}

TEST_P(GradCheck, Activations) {
  Tensor x = var(rng, {dim(1, 4), dim(2, 7)}, 2.0);
  expect_ok([&] { return silu(x); }, {x});
  expect_ok([&] { return gelu(x); }, {x});
  expect_ok([&] { return sigmoid(x); }, {x});
  expect_ok([&] { return clamp(x, -1.3, 0.9); }, {x});
}

TEST_P(GradCheck, Reductions) {
  Tensor x = var(rng, {dim(1, 3), dim(1, 4), dim(1, 5)});
  expect_ok([&] { return sum_axis(x, 1); }, {x});
  expect_ok([&] { return mean_axis(x, 2, true); }, {x});
  expect_ok([&] { return reshape(mean(x), {1}); }, {x});
  Tensor y = var(rng, x.shape());
  expect_ok([&] { return reshape(mse_loss(x, y), {1}); }, {x, y});
}

TEST_P(GradCheck, Matmul) {
  const std::size_t b = dim(1, 3), m = dim(1, 6), k = dim(1, 7), n = dim(1, 5);
  Tensor x = var(rng, {b, m, k}), y = var(rng, {b, k, n}), w = var(rng, {k, n});
  expect_ok([&] { return matmul(x, y); }, {x, y});
  expect_ok([&] { return matmul(x, w); }, {x, w});
  Tensor z = var(rng, {b, n, k});
  expect_ok([&] { return matmul_nt(x, z); }, {x, z});
  Tensor bias = var(rng, {n});
  expect_ok([&] { return linear(x, w, bias); }, {x, w, bias});
}

TEST_P(GradCheck, Conv2d) {
  const std::size_t stride = dim(1, 2), k = stride == 1 ? 3 : dim(1, 3);
  Tensor x = var(rng, {dim(1, 2), dim(1, 3), dim(4, 7), dim(4, 7)});
  Tensor w = var(rng, {dim(1, 4), x.dim(1), k, k});
  Tensor b = var(rng, {w.dim(0)});
  const std::size_t pad = k / 2;
  expect_ok([&] { return conv2d(x, w, b, stride, pad); }, {x, w, b});
}

TEST_P(GradCheck, Normalisation) {
  const std::size_t d = dim(2, 8);
  Tensor x = var(rng, {dim(1, 4), d}, 2.0), g = var(rng, {d}), b = var(rng, {d});
  expect_ok([&] { return layer_norm(x, g, b); }, {x, g, b});
  expect_ok([&] { return layer_norm(x, Tensor(), Tensor()); }, {x});
  const std::size_t groups = dim(1, 3), c = groups * dim(1, 3);
  Tensor y = var(rng, {dim(1, 2), c, dim(1, 3), dim(1, 3)}, 2.0);
  Tensor gg = var(rng, {c}), gb = var(rng, {c});
  expect_ok([&] { return group_norm(y, groups, gg, gb); }, {y, gg, gb});
  expect_ok([&] { return softmax(x); }, {x});
}

TEST_P(GradCheck, Attention) {
  const std::size_t nq = dim(1, 5), nk = dim(1, 6), d = dim(1, 6), dv = dim(1, 4);
  Tensor q = var(rng, {nq, d}), k = var(rng, {nk, d}), v = var(rng, {nk, dv});
  expect_ok([&] { return scaled_dot_attention(q, k, v).out; }, {q, k, v});
  expect_ok([&] { return scaled_dot_attention(q, k, v).weights; }, {q, k});
}

TEST_P(GradCheck, ShapeOps) {
  Tensor x = var(rng, {dim(1, 3), dim(1, 4), dim(1, 3)});
  Tensor y = var(rng, {x.dim(0), dim(1, 3), x.dim(2)});
  expect_ok([&] { return permute(x, {2, 0, 1}); }, {x});
  expect_ok([&] { return concat({x, y, x}, 1); }, {x, y});
  expect_ok([&] { return slice(y, 1, 0, 1); }, {y});
  expect_ok([&] { return stack({x, x}); }, {x});
  Tensor img = var(rng, {1, 2, dim(1, 3), dim(1, 3)});
  expect_ok([&] { return upsample_nearest2x(img); }, {img});
  Tensor table = var(rng, {6, 3});
  expect_ok([&] { return embedding(table, {0, 5, 2, 5}); }, {table});
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradCheck, ::testing::Values(1u, 2u, 3u, 4u));

}  // namespace
}  // namespace lumos
