#include <gtest/gtest.h>

#include <cmath>

#include "lumos/numcore/nn.hpp"
#include "lumos/numcore/ops.hpp"
#include "lumos/numcore/rng.hpp"

namespace lumos {
namespace {

Tensor leaf(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  const Tensor eye = Tensor::from_vector({3, 3}, std::vector<float>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  Rng rng(1);
  const Tensor b = rng.normal_tensor({3, 4});
  const Tensor c = matmul(eye, b);
  EXPECT_EQ(c.to_vector(), b.to_vector());
}

TEST(Matmul, HandArithmetic) {
  const Tensor a = Tensor::from_vector({2, 2}, std::vector<float>{1, 2, 3, 4});
  const Tensor b = Tensor::from_vector({2, 1}, std::vector<float>{1, 1});
  const Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c.to_vector(), (std::vector<double>{3, 7}));
}

TEST(Matmul, MatchesTripleLoopOracle) {
  Rng rng(7);
  const Tensor a = rng.normal_tensor({5, 7}, DType::f64);
  const Tensor b = rng.normal_tensor({7, 3}, DType::f64);
  const Tensor c = matmul(a, b);
  const auto av = a.to_vector(), bv = b.to_vector(), cv = c.to_vector();
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 7; ++k) s += av[i * 7 + k] * bv[k * 3 + j];
      EXPECT_LT(std::abs(cv[i * 3 + j] - s), 1e-6);
    }
  }
}

TEST(Matmul, RejectsInnerDimensionMismatch) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), ShapeError);
  EXPECT_THROW(matmul(Tensor::zeros({2, 2, 3}), Tensor::zeros({3, 3, 2})), ShapeError);
}

TEST(Conv2d, UnitKernelIsIdentity) {
  Rng rng(2);
  const Tensor x = rng.normal_tensor({1, 1, 4, 5});
  const Tensor w = Tensor::full({1, 1, 1, 1}, 1.0);
  EXPECT_EQ(conv2d(x, w, Tensor(), 1, 0).to_vector(), x.to_vector());
}

TEST(Conv2d, OnesKernelCountsNeighbours) {
  const Tensor x = Tensor::full({1, 1, 5, 5}, 1.0);
  const Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
  const Tensor y = conv2d(x, w, Tensor(), 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 5, 5}));
  EXPECT_EQ(y.at(2 * 5 + 2), 9.0);
  EXPECT_EQ(y.at(0), 4.0);
  EXPECT_EQ(y.at(24), 4.0);
  EXPECT_EQ(y.at(2), 6.0);
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  Rng rng(11);
  for (std::size_t stride : {1u, 2u}) {
    const std::size_t N = 2, C = 3, H = 7, W = 6, O = 4, K = 3, P = 1;
    const Tensor x = rng.normal_tensor({N, C, H, W});
    const Tensor w = rng.normal_tensor({O, C, K, K});
    const Tensor b = rng.normal_tensor({O});
    const Tensor y = conv2d(x, w, b, stride, P);
    const std::size_t Ho = (H + 2 * P - K) / stride + 1, Wo = (W + 2 * P - K) / stride + 1;
    ASSERT_EQ(y.shape(), (Shape{N, O, Ho, Wo}));
    const auto xv = x.to_vector(), wv = w.to_vector(), bv = b.to_vector(), yv = y.to_vector();
    double max_err = 0.0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t i = 0; i < Ho; ++i)
          for (std::size_t j = 0; j < Wo; ++j) {
            double s = bv[o];
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t ki = 0; ki < K; ++ki)
                for (std::size_t kj = 0; kj < K; ++kj) {
                  const long ih = static_cast<long>(i * stride + ki) - static_cast<long>(P);
                  const long iw = static_cast<long>(j * stride + kj) - static_cast<long>(P);
                  if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W))
                    continue;
                  s += xv[((n * C + c) * H + ih) * W + iw] * wv[((o * C + c) * K + ki) * K + kj];
                }
            max_err = std::max(max_err, std::abs(s - yv[((n * O + o) * Ho + i) * Wo + j]));
          }
    EXPECT_LT(max_err, 1e-5) << "stride " << stride;
  }
}

TEST(Conv2d, RejectsChannelMismatchAndOversizedKernel) {
  EXPECT_THROW(conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor(), 1, 1),
               ShapeError);
  EXPECT_THROW(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), Tensor(), 1, 0),
               ShapeError);
}

TEST(LayerNorm, ConstantRowNormalisesToZero) {
  const Tensor x = Tensor::full({2, 6}, 3.5, DType::f64);
  for (double v : layer_norm(x, Tensor(), Tensor()).to_vector()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, NormalisedRowIsFixedPoint) {
  const Tensor x = Tensor::from_vector({1, 2}, std::vector<double>{1.0, -1.0});
  const auto y = layer_norm(x, Tensor::full({2}, 1.0, DType::f64), Tensor::zeros({2}, DType::f64),
                            1e-12)
                     .to_vector();
  EXPECT_NEAR(y[0], 1.0, 1e-9);
  EXPECT_NEAR(y[1], -1.0, 1e-9);
}

TEST(LayerNorm, RandomRowHasUnitMoments) {
  Rng rng(5);
  const Tensor x = add_scalar(rng.normal_tensor({1, 64}, DType::f64, 3.0), 2.0);
  const auto y = layer_norm(x, Tensor(), Tensor()).to_vector();
  double m = 0.0, v = 0.0;
  for (double e : y) m += e;
  m /= y.size();
  for (double e : y) v += (e - m) * (e - m);
  v /= y.size();
  EXPECT_LT(std::abs(m), 1e-6);
  EXPECT_LT(std::abs(v - 1.0), 1e-4);
}

TEST(Attention, SingleKeyPassesValueThrough) {
  Rng rng(3);
  const Tensor q = rng.normal_tensor({3, 4});
  const Tensor k = rng.normal_tensor({1, 4});
  const Tensor v = rng.normal_tensor({1, 5});
  const AttentionOutput a = scaled_dot_attention(q, k, v);
  for (double w : a.weights.to_vector()) EXPECT_EQ(w, 1.0);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_FLOAT_EQ(a.out.at(r * 5 + j), v.at(j));
}

TEST(Attention, IdenticalKeysGiveUniformWeights) {
  Rng rng(4);
  const Tensor q = rng.normal_tensor({2, 4});
  const Tensor row = rng.normal_tensor({1, 4});
  const Tensor k = concat({row, row, row, row, row}, 0);
  const Tensor v = rng.normal_tensor({5, 3});
  for (double w : scaled_dot_attention(q, k, v).weights.to_vector()) EXPECT_NEAR(w, 0.2, 1e-7);
}

TEST(Attention, MatchesExplicitSoftmaxOracle) {
  Rng rng(9);
  const Tensor q = rng.normal_tensor({4, 8}, DType::f64);
  const Tensor k = rng.normal_tensor({6, 8}, DType::f64);
  const Tensor v = rng.normal_tensor({6, 8}, DType::f64);
  const AttentionOutput a = scaled_dot_attention(q, k, v);
  const auto qv = q.to_vector(), kv = k.to_vector(), vv = v.to_vector();
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> s(6);
    double mx = -1e300, z = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      for (std::size_t d = 0; d < 8; ++d) s[j] += qv[i * 8 + d] * kv[j * 8 + d];
      s[j] /= std::sqrt(8.0);
      mx = std::max(mx, s[j]);
    }
    for (double& e : s) z += (e = std::exp(e - mx));
    for (double& e : s) e /= z;
    for (std::size_t j = 0; j < 6; ++j) EXPECT_LT(std::abs(a.weights.at(i * 6 + j) - s[j]), 1e-6);
    for (std::size_t d = 0; d < 8; ++d) {
      double o = 0.0;
      for (std::size_t j = 0; j < 6; ++j) o += s[j] * vv[j * 8 + d];
      EXPECT_LT(std::abs(a.out.at(i * 8 + d) - o), 1e-6);
    }
  }
}

TEST(Attention, RejectsMismatchedWidths) {
  EXPECT_THROW(scaled_dot_attention(Tensor::zeros({2, 4}), Tensor::zeros({3, 5}), Tensor::zeros({3, 2})),
               ShapeError);
  EXPECT_THROW(scaled_dot_attention(Tensor::zeros({2, 4}), Tensor::zeros({3, 4}), Tensor::zeros({2, 2})),
               ShapeError);
}

TEST(Backward, SumGivesOnes) {
  Rng rng(1);
  Tensor x = leaf(rng.normal_tensor({3, 4}));
  backward(sum(x));
  for (double g : x.grad().to_vector()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquaredNormGivesTwiceInput) {
  Rng rng(2);
  Tensor x = leaf(rng.normal_tensor({7}, DType::f64));
  backward(sum(mul(x, x)));
  const auto g = x.grad().to_vector(), v = x.to_vector();
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_DOUBLE_EQ(g[i], 2.0 * v[i]);
}

TEST(Backward, RejectsNonScalarLoss) {
  Tensor x = leaf(Tensor::zeros({2}));
  EXPECT_THROW(backward(scale(x, 2.0)), ShapeError);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  Tensor x = leaf(Tensor::from_vector({1}, std::vector<double>{3.0}));
  const Tensor y = mul(x, x);
  backward(sum(add(y, y)));  // d/dx 2x^2 = 4x
  EXPECT_DOUBLE_EQ(x.grad().item(), 12.0);
}

TEST(Freezing, FrozenParameterReceivesNoGradient) {
  Rng rng(3);
  Linear frozen(4, 3, rng);
  Linear live(3, 2, rng);
  ParamList frozen_params;
  frozen.collect("frozen", frozen_params);
  set_trainable(frozen_params, false);
  Tensor x = rng.normal_tensor({5, 4});
  backward(sum(live.forward(frozen.forward(x))));
  EXPECT_FALSE(frozen.weight.tensor.has_grad());
  EXPECT_FALSE(frozen.bias.tensor.has_grad());
  EXPECT_TRUE(live.weight.tensor.has_grad());
}

TEST(NonFinite, OverflowAbortsWithDiagnostic) {
  const Tensor x = Tensor::full({2}, 1e30);
  EXPECT_THROW(mul(x, x), NonFiniteError);
}

TEST(NoGrad, GuardSuppressesGraph) {
  Tensor x = leaf(Tensor::full({2}, 1.0));
  {
    NoGradGuard guard;
    EXPECT_FALSE(scale(x, 2.0).requires_grad());
  }
  EXPECT_TRUE(scale(x, 2.0).requires_grad());
}

TEST(Determinism, SameSeedSameBits) {
  auto run = [] {
    Rng rng(42);
    Conv2d conv(3, 8, 3, 1, 1, rng);
    const Tensor x = rng.normal_tensor({2, 3, 8, 8});
    return silu(conv.forward(x)).to_vector();
  };
  EXPECT_EQ(run(), run());
}

TEST(Broadcast, BiasAndChannelForms) {
  const Tensor x = Tensor::from_vector({2, 2, 1, 1}, std::vector<float>{1, 2, 3, 4});
  const Tensor b = Tensor::from_vector({2, 1, 1}, std::vector<float>{10, 20});
  EXPECT_EQ(add(x, b).to_vector(), (std::vector<double>{11, 22, 13, 24}));
  const Tensor r = Tensor::from_vector({2}, std::vector<float>{1, -1});
  EXPECT_EQ(mul(reshape(x, {2, 2}), r).to_vector(), (std::vector<double>{1, -2, 3, -4}));
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({2})), ShapeError);
}

TEST(ShapeOps, PermuteConcatSlice) {
  const Tensor x = Tensor::from_vector({2, 3}, std::vector<float>{0, 1, 2, 3, 4, 5});
  EXPECT_EQ(permute(x, {1, 0}).to_vector(), (std::vector<double>{0, 3, 1, 4, 2, 5}));
  EXPECT_EQ(concat({x, x}, 1).shape(), (Shape{2, 6}));
  EXPECT_EQ(slice(x, 1, 1, 2).to_vector(), (std::vector<double>{1, 2, 4, 5}));
  EXPECT_EQ(concat({x, Tensor::zeros({0, 3})}, 0).to_vector(), x.to_vector());
  EXPECT_EQ(stack({x, x}).shape(), (Shape{2, 2, 3}));
}

}  // namespace
}  // namespace lumos
