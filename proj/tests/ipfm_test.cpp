#include <gtest/gtest.h>

#include <cmath>

#include "lumos/ipfm/ipfm.hpp"
#include "support/gradcheck.hpp"
#include "support/params.hpp"

namespace lumos::ipfm {
namespace {

using lumos::testing::grad_check;
using lumos::testing::project;
using lumos::testing::randomize;
using lumos::testing::tensors_of;

double l2_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += (a.at(i) - b.at(i)) * (a.at(i) - b.at(i));
  return std::sqrt(s);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

TEST(Sinusoid, ZeroTimestepPattern) {
  const auto v = sinusoid(0.0, 16);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(v[i], 0.0);
    EXPECT_EQ(v[8 + i], 1.0);
  }
}

TEST(Sinusoid, DistinctTimestepsDiffer) {
  for (double t1 : {0.0, 1.0, 10.0, 999.0}) {
    const auto a = sinusoid(t1, 64);
    const auto b = sinusoid(t1 + 1.0, 64);
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    EXPECT_LT(dot / std::sqrt(na * nb), 1.0 - 1e-9);
  }
}

TEST(Sinusoid, ReferenceVectorAt500) {
  const auto v = sinusoid(500.0, 128);
  for (std::size_t i = 0; i < 64; ++i) {
    const double f = std::pow(10000.0, -static_cast<double>(i) / 64.0);
    EXPECT_NEAR(v[i], std::sin(500.0 * f), 1e-12);
    EXPECT_NEAR(v[64 + i], std::cos(500.0 * f), 1e-12);
  }
}

TEST(AdaLN, ZeroInitIsPlainLayerNorm) {
  Rng rng(1);
  AdaLN ada(8, 6, rng);
  const Tensor x = rng.normal_tensor({4, 8});
  const Tensor cond = rng.normal_tensor({1, 6});
  EXPECT_EQ(ada.forward(x, cond).to_vector(), layer_norm(x, Tensor(), Tensor()).to_vector());
}

TEST(AdaLN, NegativeUnitScaleLeavesShift) {
  Rng rng(2);
  AdaLN ada(8, 6, rng);
  auto bias = ada.modulation.bias.tensor.mutable_data<float>();
  std::vector<float> shift(8);
  for (std::size_t i = 0; i < 8; ++i) {
    bias[i] = -1.0f;
    bias[8 + i] = shift[i] = static_cast<float>(rng.normal());
  }
  const Tensor y = ada.forward(rng.normal_tensor({3, 8}), rng.normal_tensor({1, 6}));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t i = 0; i < 8; ++i) EXPECT_FLOAT_EQ(y.at(r * 8 + i), shift[i]);
}

TEST(AdaLN, GradientCheck) {
  Rng rng(3);
  AdaLN ada(8, 5, rng);
  ParamList params;
  ada.collect("", params);
  convert_params(params, DType::f64);
  randomize(params, rng);
  Tensor x = rng.normal_tensor({4, 8}, DType::f64);
  Tensor cond = rng.normal_tensor({1, 5}, DType::f64);
  x.set_requires_grad(true);
  cond.set_requires_grad(true);
  const Tensor r = rng.normal_tensor({4, 8}, DType::f64);
  auto inputs = tensors_of(params);
  inputs.push_back(x);
  inputs.push_back(cond);
  const auto res = grad_check([&] { return project(ada.forward(x, cond), r); }, inputs);
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst;
}

TEST(IpfmBlock, ZeroInitOutputsAreResidualIdentity) {
  Rng rng(4);
  for (Mode m : {Mode::adaln, Mode::ln, Mode::mlp}) {
    IpfmBlock block(m, 8, 2, rng);
    const Tensor q = rng.normal_tensor({3, 8});
    const Tensor temb = rng.normal_tensor({1, 8});
    const Tensor out = block.forward(q, rng.normal_tensor({5, 8}), temb);
    const Tensor p = m == Mode::adaln ? add(q, temb) : q;
    EXPECT_EQ(out.to_vector(), p.to_vector()) << mode_name(m);
  }
}

TEST(IpfmBlock, EmptyTextDegeneratesToSelfAttention) {
  Rng rng(5);
  IpfmBlock block(Mode::adaln, 8, 2, rng);
  ParamList params;
  block.collect("", params);
  randomize(params, rng, 0.3);
  const Tensor q = rng.normal_tensor({3, 8});
  const Tensor temb = rng.normal_tensor({1, 8});
  Tensor weights;
  const Tensor out = block.forward(q, Tensor::zeros({0, 8}), temb, &weights);
  EXPECT_EQ(weights.shape(), (Shape{3, 3}));
  // Reference: the same block written as self-attention over the normalised queries.
  const Tensor p = add(q, temb);
  const Tensor pb = block.ada1.forward(p, temb);
  const Tensor pt = add(p, block.attn.forward(pb, pb).out);
  const Tensor want = add(pt, block.ffn.forward(block.ada2.forward(pt, temb)));
  EXPECT_LT(max_abs_diff(out, want), 1e-6);
}

TEST(IpfmBlock, RejectsWidthMismatch) {
  Rng rng(6);
  IpfmBlock block(Mode::adaln, 8, 2, rng);
  EXPECT_THROW(block.forward(Tensor::zeros({2, 8}), Tensor::zeros({3, 7}), Tensor::zeros({1, 8})),
               ShapeError);
}

TEST(IpfmBlock, AttentionRowsAreStochastic) {
  Rng rng(7);
  IpfmBlock block(Mode::adaln, 8, 2, rng);
  ParamList params;
  block.collect("", params);
  randomize(params, rng);
  Tensor w;
  block.forward(rng.normal_tensor({4, 8}), rng.normal_tensor({6, 8}), rng.normal_tensor({1, 8}), &w);
  ASSERT_EQ(w.shape(), (Shape{4, 10}));
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 10; ++c) s += w.at(r * 10 + c);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(IpfmBlock, GradientCheck) {
  for (Mode m : {Mode::adaln, Mode::ln, Mode::mlp}) {
    Rng rng(8);
    IpfmBlock block(m, 8, 2, rng);
    ParamList params;
    block.collect("", params);
    convert_params(params, DType::f64);
    randomize(params, rng, 0.4);
    Tensor q = rng.normal_tensor({2, 8}, DType::f64);
    Tensor e = rng.normal_tensor({3, 8}, DType::f64);
    Tensor temb = rng.normal_tensor({1, 8}, DType::f64);
    for (Tensor* t : {&q, &e, &temb}) t->set_requires_grad(true);
    const Tensor r = rng.normal_tensor({2, 8}, DType::f64);
    auto inputs = tensors_of(params);
    inputs.insert(inputs.end(), {q, e});
    if (m == Mode::adaln) inputs.push_back(temb);
    const auto res = grad_check([&] { return project(block.forward(q, e, temb), r); }, inputs);
    EXPECT_LT(res.max_rel_error, 1e-5) << mode_name(m) << " " << res.worst;
  }
}

IpfmConfig small(Mode m, std::size_t blocks = 2) {
  IpfmConfig c;
  c.mode = m;
  c.n_blocks = blocks;
  c.n_query = 3;
  c.d = 8;
  return c;
}

TEST(IpfmStack, NoBlocksReturnsQueries) {
  Rng rng(9);
  IpfmStack s(small(Mode::adaln, 0), rng);
  EXPECT_EQ(s.forward(rng.normal_tensor({4, 8}), 10).to_vector(), s.queries.tensor.to_vector());
}

TEST(IpfmStack, IdentityOnQueriesAtInitForEveryMode) {
  for (Mode m : {Mode::none, Mode::mlp, Mode::ln, Mode::adaln}) {
    Rng rng(10);
    IpfmStack s(small(m, 4), rng);
    for (std::size_t t : {1u, 500u, 1000u}) {
      const Tensor e = rng.normal_tensor({1 + rng.index(6), 8});
      EXPECT_EQ(s.forward(e, t).to_vector(), s.queries.tensor.to_vector()) << mode_name(m);
    }
  }
}

TEST(IpfmStack, OutputShapeIndependentOfTextLength) {
  Rng rng(11);
  IpfmStack s(small(Mode::adaln), rng);
  for (std::size_t n : {0u, 1u, 5u, 40u}) {
    EXPECT_EQ(s.forward(rng.normal_tensor({n, 8}), 3).shape(), (Shape{3, 8}));
  }
}

TEST(IpfmStack, TextOrderDoesNotMatterWithoutPositions) {
  Rng rng(12);
  IpfmStack s(small(Mode::adaln), rng);
  ParamList params;
  s.collect("", params);
  randomize(params, rng, 0.3);
  const Tensor e = rng.normal_tensor({5, 8});
  const Tensor permuted = concat({slice(e, 0, 3, 2), slice(e, 0, 0, 3)}, 0);
  EXPECT_LT(max_abs_diff(s.forward(e, 77), s.forward(permuted, 77)), 1e-5);
}

TEST(IpfmStack, TimestepChangesPrior) {
  Rng rng(13);
  IpfmStack s(small(Mode::adaln), rng);
  ParamList params;
  s.collect("", params);
  randomize(params, rng, 0.3);
  const Tensor e = rng.normal_tensor({4, 8});
  EXPECT_GT(l2_diff(s.forward(e, 10), s.forward(e, 900)), 0.0);
}

TEST(IpfmStack, BatchStacksPerSampleOutputs) {
  Rng rng(14);
  IpfmStack s(small(Mode::adaln), rng);
  ParamList params;
  s.collect("", params);
  randomize(params, rng, 0.3);
  const Tensor e1 = rng.normal_tensor({2, 8}), e2 = rng.normal_tensor({6, 8});
  const Tensor b = s.forward_batch({e1, e2}, {5, 700});
  EXPECT_EQ(b.shape(), (Shape{2, 3, 8}));
  EXPECT_EQ(slice(b, 0, 1, 1).to_vector(), s.forward(e2, 700).to_vector());
}

TEST(IpfmStack, FullGradientCheck) {
  Rng rng(15);
  IpfmStack s(small(Mode::adaln), rng);
  ParamList params;
  s.collect("", params);
  convert_params(params, DType::f64);
  randomize(params, rng, 0.3);
  Tensor e = rng.normal_tensor({3, 8}, DType::f64);
  e.set_requires_grad(true);
  const Tensor r = rng.normal_tensor({3, 8}, DType::f64);
  auto inputs = tensors_of(params);
  inputs.push_back(e);
  const auto res = grad_check([&] { return project(s.forward(e, 321), r); }, inputs);
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst;
}

TEST(Mode, ParseRoundTrip) {
  for (Mode m : {Mode::none, Mode::mlp, Mode::ln, Mode::adaln}) EXPECT_EQ(parse_mode(mode_name(m)), m);
  EXPECT_THROW(parse_mode("film"), std::invalid_argument);
}

}  // namespace
}  // namespace lumos::ipfm
