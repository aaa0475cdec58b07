#include <gtest/gtest.h>

#include "gramtex/ops.hpp"
#include "gramtex/tensor.hpp"
#include "support/oracles.hpp"

using namespace gramtex;
using namespace gramtex::testing;

TEST(Tensor, ConstructionAndShape) {
  const Tensor z = Tensor::zeros({2, 3});
  EXPECT_EQ(z.numel(), 6u);
  EXPECT_EQ(z.ndim(), 2u);
  EXPECT_EQ(z.dim(1), 3u);
  EXPECT_EQ(z.dtype(), DType::f32);
  EXPECT_THROW(z.dim(2), DimensionError);

  const Tensor f = Tensor::full({4}, 2.5, DType::f64);
  for (double v : f.to_vector()) EXPECT_EQ(v, 2.5);

  EXPECT_THROW(Tensor::from_values({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_EQ(Tensor::scalar(3.0).item(), 3.0);
  EXPECT_THROW(z.item(), ContractError);
  EXPECT_THROW(z.data<double>(), ContractError);
}

TEST(Tensor, DtypeConversionAndDetach) {
  const Tensor a = Tensor::from_values({3}, {0.5, -1.25, 2.0}, DType::f64);
  const Tensor b = a.to(DType::f32);
  EXPECT_EQ(b.dtype(), DType::f32);
  EXPECT_EQ(b.to_vector(), a.to_vector());

  Tensor x = a.detach();
  x.set_requires_grad(true);
  const Tensor y = scale(x, 2.0);
  EXPECT_FALSE(y.is_leaf());
  const Tensor d = y.detach();
  EXPECT_TRUE(d.is_leaf());
  EXPECT_FALSE(d.requires_grad());
  EXPECT_EQ(d.to_vector(), (std::vector<double>{1.0, -2.5, 4.0}));
}

TEST(Tensor, RequiresGradOnlyOnLeaves) {
  Tensor x = Tensor::zeros({2}, DType::f64);
  x.set_requires_grad(true);
  Tensor y = add(x, x);
  EXPECT_THROW(y.set_requires_grad(false), ContractError);
}

TEST(Autodiff, SumGivesOnes) {
  Tensor x = random_tensor({2, 3, 4}, 1);
  x.set_requires_grad(true);
  backward(sum(x));
  for (double g : x.grad().to_vector()) EXPECT_EQ(g, 1.0);
}

TEST(Autodiff, HalfSquaredNormGivesIdentity) {
  Tensor x = random_tensor({5, 7}, 2);
  x.set_requires_grad(true);
  backward(scale(sum(mul(x, x)), 0.5));
  EXPECT_EQ(x.grad().to_vector(), x.to_vector());
}

TEST(Autodiff, FanOutAccumulates) {
  Tensor x = random_tensor({4}, 3);
  x.set_requires_grad(true);
  const Tensor y = relu(x);
  backward(sum(add(mul(x, x), x)));
  const auto g = x.grad().to_vector();
  const auto v = x.to_vector();
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_DOUBLE_EQ(g[i], 2 * v[i] + 1);
  (void)y;
}

TEST(Autodiff, ReshapeRoutesGradient) {
  Tensor x = random_tensor({2, 6}, 4);
  x.set_requires_grad(true);
  const Tensor r = x.reshape({3, 4});
  EXPECT_EQ(r.shape(), (Shape{3, 4}));
  backward(sum(mul(r, r)));
  const auto g = x.grad().to_vector();
  const auto v = x.to_vector();
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_DOUBLE_EQ(g[i], 2 * v[i]);
  EXPECT_THROW(x.reshape({5}), DimensionError);
}

TEST(Autodiff, BackwardContracts) {
  Tensor x = random_tensor({3}, 5);
  EXPECT_THROW(backward(sum(x)), ContractError);  // nothing requires grad
  x.set_requires_grad(true);
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);  // not a scalar
  EXPECT_THROW(backward(Tensor()), ContractError);
  EXPECT_THROW(Tensor(x).detach().grad(), ContractError);
}

TEST(Autodiff, NoGradGuardStopsRecording) {
  Tensor x = random_tensor({3}, 6);
  x.set_requires_grad(true);
  {
    NoGradGuard ng;
    EXPECT_FALSE(grad_enabled());
    const Tensor y = scale(x, 3.0);
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(y.is_leaf());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(scale(x, 3.0).requires_grad());
}

TEST(Autodiff, ZeroGradClears) {
  Tensor x = random_tensor({3}, 7);
  x.set_requires_grad(true);
  backward(sum(x));
  EXPECT_TRUE(x.has_grad());
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
  backward(sum(x));
  backward(sum(x));
  for (double g : x.grad().to_vector()) EXPECT_EQ(g, 2.0);  // accumulates across calls
}

TEST(Tape, TopologicalOrder) {
  Tensor x = random_tensor({4}, 8);
  x.set_requires_grad(true);
  const Tensor a = relu(x);
  const Tensor b = mul(a, x);
  const Tensor loss = sum(add(a, b));
  const Tape tape = Tape::record(loss);
  ASSERT_EQ(tape.size(), 4u);
  const auto& e = tape.entries();
  EXPECT_EQ(e.back().result, loss.node());
  for (std::size_t k = 0; k < e.size(); ++k) {
    for (const auto& in : e[k].result->inputs) {
      if (in->is_leaf()) continue;
      bool earlier = false;
      for (std::size_t j = 0; j < k; ++j) earlier |= e[j].result == in;
      EXPECT_TRUE(earlier) << "entry " << k << " consumes a later result";
    }
  }
}

TEST(Tape, IntermediateGradsReleased) {
  Tensor x = random_tensor({4}, 9);
  x.set_requires_grad(true);
  const Tensor a = scale(x, 2.0);
  const Tensor loss = sum(a);
  backward(loss);
  EXPECT_FALSE(a.has_grad());
  EXPECT_TRUE(x.has_grad());
}

TEST(Autodiff, MseFiniteDifference) {
  Tensor x = random_tensor({2, 3}, 10);
  const Tensor t = random_tensor({2, 3}, 11);
  x.set_requires_grad(true);
  backward(mse_loss(x, t));
  const auto g = x.grad().to_vector();
  NoGradGuard ng;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double fd = central_difference([&](const Tensor& v) { return mse_loss(v, t).item(); }, x, i, 1e-5);
    EXPECT_NEAR(g[i], fd, 1e-9);
  }
}

TEST(Autodiff, TextureLossThroughTwoConvsMatchesFiniteDifferences) {
  const auto extractor = FeatureExtractor::random(two_conv_spec(3, 5), 20, DType::f64);
  const TapSet taps{"conv1_1", "conv1_2"};
  const Tensor target = random_tensor({1, 3, 8, 8}, 21, DType::f64, 0.0, 1.0);
  std::vector<Tensor> tt;
  {
    NoGradGuard ng;
    tt = extractor.forward_with_taps(target, taps);
  }
  auto loss_of = [&](const Tensor& x) {
    std::vector<Tensor> est = extractor.forward_with_taps(x, taps);
    Tensor total = Tensor::scalar(0.0, DType::f64);
    for (std::size_t l = 0; l < 2; ++l) {
      const Tensor d = sub(gram_matrix(est[l]), gram_matrix(tt[l]));
      total = add(total, sum(mul(d, d)));
    }
    return total;
  };
  Tensor x = random_tensor({1, 3, 8, 8}, 22, DType::f64, 0.0, 1.0);
  x.set_requires_grad(true);
  backward(loss_of(x));
  const auto g = x.grad().to_vector();
  NoGradGuard ng;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < x.numel(); i += 3) {
    if (!smooth_along(extractor, x, i, 1e-5)) continue;
    const double fd = central_difference([&](const Tensor& v) { return loss_of(v).item(); }, x, i, 1e-5);
    EXPECT_LE(rel_diff(g[i], fd), 1e-5) << "coordinate " << i;
    ++checked;
  }
  EXPECT_GT(checked, 50u);
}
