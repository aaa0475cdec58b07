#include <gtest/gtest.h>

#include "gramtex/adam.hpp"
#include "gramtex/ops.hpp"

using namespace gramtex;

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::vector<Tensor> params{Tensor::from_values({3}, {1, -2, 3}, DType::f64)};
  auto state = AdamState::for_parameters(params, AdamConfig{0.1});
  const std::vector<Tensor> grads{Tensor::zeros({3}, DType::f64)};
  for (int i = 0; i < 5; ++i) adam_step(params, grads, state);
  EXPECT_EQ(params[0].to_vector(), (std::vector<double>{1, -2, 3}));
  EXPECT_EQ(state.step, 5u);
}

TEST(Adam, MomentsDecayUnderZeroGradient) {
  std::vector<Tensor> params{Tensor::zeros({1}, DType::f64)};
  auto state = AdamState::for_parameters(params, AdamConfig{0.01});
  adam_step(params, std::vector<Tensor>{Tensor::full({1}, 1.0, DType::f64)}, state);
  const double m1 = state.first_moment[0].item(), v1 = state.second_moment[0].item();
  EXPECT_DOUBLE_EQ(m1, 0.1);
  EXPECT_DOUBLE_EQ(v1, 0.001);
  adam_step(params, std::vector<Tensor>{Tensor::zeros({1}, DType::f64)}, state);
  EXPECT_DOUBLE_EQ(state.first_moment[0].item(), 0.9 * m1);
  EXPECT_DOUBLE_EQ(state.second_moment[0].item(), 0.999 * v1);
}

TEST(Adam, FirstStepIsBiasCorrected) {
  std::vector<Tensor> params{Tensor::from_values({1}, {2.0}, DType::f64)};
  auto state = AdamState::for_parameters(params, AdamConfig{0.01});
  adam_step(params, std::vector<Tensor>{Tensor::full({1}, 1.0, DType::f64)}, state);
  EXPECT_NEAR(params[0].item(), 2.0 - 0.01 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, MinimizesQuadratic) {
  Tensor p = Tensor::from_values({1}, {1.0}, DType::f64);
  p.set_requires_grad(true);
  std::vector<Tensor> params{p};
  auto state = AdamState::for_parameters(params, AdamConfig{0.05});
  for (int i = 0; i < 100; ++i) {
    p.zero_grad();
    backward(sum(mul(p, p)));
    adam_step(params, state);
  }
  EXPECT_LT(std::abs(p.item()), 0.1);
}

TEST(Adam, UsesOwnGradientsAndTreatsMissingAsZero) {
  Tensor a = Tensor::from_values({1}, {1.0}, DType::f32);
  Tensor b = Tensor::from_values({1}, {1.0}, DType::f32);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  std::vector<Tensor> params{a, b};
  auto state = AdamState::for_parameters(params, AdamConfig{0.1});
  backward(sum(a));
  adam_step(params, state);
  EXPECT_LT(a.item(), 1.0);
  EXPECT_EQ(b.item(), 1.0);
}

TEST(Adam, ShapeErrors) {
  std::vector<Tensor> params{Tensor::zeros({2}, DType::f64)};
  auto state = AdamState::for_parameters(params);
  EXPECT_THROW(adam_step(params, std::vector<Tensor>{Tensor::zeros({3}, DType::f64)}, state), DimensionError);
  EXPECT_THROW(adam_step(params, std::vector<Tensor>{}, state), DimensionError);
  std::vector<Tensor> other{Tensor::zeros({2}, DType::f64), Tensor::zeros({1}, DType::f64)};
  EXPECT_THROW(adam_step(other, state), DimensionError);
}
