#include <gtest/gtest.h>

#include <fstream>

#include "gramtex/imaging.hpp"
#include "gramtex/transfer.hpp"
#include "support/oracles.hpp"

using namespace gramtex;
using namespace gramtex::testing;

class Transfer : public ::testing::Test {
 protected:
  FeatureExtractor fx = FeatureExtractor::random(vgg19_spec(8), 1, DType::f64);
  Tensor style = textured_image(32, 32, 2);

  TransferConfig config(std::size_t steps) const {
    TransferConfig c;
    c.steps = steps;
    return c;
  }
};

TEST_F(Transfer, StyleAsInitIsStationary) {
  const auto r = optimize_image(style, style, fx, config(5));
  ASSERT_EQ(r.trace.size(), 5u);
  for (double l : r.trace) EXPECT_EQ(l, 0.0);
  EXPECT_EQ(r.final_loss, 0.0);
  EXPECT_EQ(r.final_image.to_vector(), style.to_vector());
}

TEST_F(Transfer, LossDropsAndTraceMatchesSteps) {
  const Tensor init = smooth_image(32, 32, 3);
  const auto r = optimize_image(init, style, fx, config(40));
  ASSERT_EQ(r.trace.size(), 40u);
  EXPECT_LT(r.final_loss, r.trace.front());
  EXPECT_EQ(r.final_image.shape(), init.shape());
  for (double v : r.final_image.to_vector()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  // The init tensor itself is left alone.
  EXPECT_EQ(init.to_vector(), smooth_image(32, 32, 3).to_vector());
}

TEST_F(Transfer, Deterministic) {
  const Tensor init = smooth_image(32, 32, 4);
  const auto a = optimize_image(init, style, fx, config(10));
  const auto b = optimize_image(init, style, fx, config(10));
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.final_image.to_vector(), b.final_image.to_vector());
}

TEST_F(Transfer, SingleMaskMatchesUnmasked) {
  const Tensor init = smooth_image(32, 32, 5);
  TransferConfig masked = config(15);
  masked.masks = MaskSet::single(32, 32);
  const auto a = optimize_image(init, style, fx, config(15));
  const auto b = optimize_image(init, style, fx, masked);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) EXPECT_LE(rel_diff(a.trace[k], b.trace[k]), 1e-6) << k;
}

TEST_F(Transfer, MaskExtentsMustMatch) {
  TransferConfig c = config(2);
  c.masks = MaskSet::single(16, 16);
  EXPECT_THROW(optimize_image(style, style, fx, c), Error);
}

TEST_F(Transfer, InitialImages) {
  const Tensor white = make_initial_image(InitMode::white, {}, style, 4);
  EXPECT_EQ(white.shape(), style.shape());
  for (double v : white.to_vector()) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(make_initial_image(InitMode::bicubic_up, {}, style, 4).to_vector(),
            bicubic_upsample(bicubic_downsample(style, 4), 4).to_vector());
  const Tensor g = smooth_image(32, 32, 6);
  EXPECT_EQ(make_initial_image(InitMode::given_image, g, style, 4).to_vector(), g.to_vector());
  EXPECT_THROW(make_initial_image(InitMode::given_image, {}, style, 4), ContractError);
}

TEST_F(Transfer, BicubicInitBeatsWhiteInit) {
  const auto white = optimize_image(make_initial_image(InitMode::white, {}, style, 4), style, fx, config(20));
  const auto bic = optimize_image(make_initial_image(InitMode::bicubic_up, {}, style, 4), style, fx, config(20));
  EXPECT_GT(white.final_loss, bic.final_loss);
}

TEST_F(Transfer, SrRefine) {
  const Tensor lr = bicubic_downsample(style, 4);
  const auto r = sr_refine(lr, style, 4, fx, config(20));
  EXPECT_EQ(r.final_image.shape(), style.shape());
  EXPECT_LT(r.final_loss, r.trace.front());
  EXPECT_THROW(sr_refine(lr, style, 2, fx, config(2)), ContractError);
}

TEST(TransferConfig, Validation) {
  TransferConfig c;
  EXPECT_NO_THROW(c.validate());
  c.steps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.init_mode = InitMode::bicubic_up;
  c.init_scale = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.loss.layers.clear();
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(MovingAverage, Windows) {
  std::vector<double> falling(100);
  for (std::size_t i = 0; i < falling.size(); ++i) falling[i] = 100.0 - double(i);
  EXPECT_TRUE(moving_average_non_increasing(falling));

  std::vector<double> flat(75, 1.0);
  for (std::size_t i = 50; i < 75; ++i) flat[i] = 1.009;  // within 1%
  EXPECT_TRUE(moving_average_non_increasing(flat));
  for (std::size_t i = 50; i < 75; ++i) flat[i] = 1.02;
  EXPECT_FALSE(moving_average_non_increasing(flat));

  // A trailing partial window is not judged.
  std::vector<double> tail(60, 1.0);
  for (std::size_t i = 50; i < 60; ++i) tail[i] = 5.0;
  EXPECT_TRUE(moving_average_non_increasing(tail));

  EXPECT_TRUE(moving_average_non_increasing({3.0, 4.0, 5.0}));
  EXPECT_FALSE(moving_average_non_increasing({1.0, 1.0, 2.0, 2.0}, 2));
}

TEST(LossCsv, Format) {
  const auto dir = scratch_dir("transfer_csv");
  write_loss_csv(dir / "l.csv", {0.5, 0.25});
  std::ifstream in(dir / "l.csv");
  std::string all((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(all, "step,loss\n0,0.5\n1,0.25\n");
  EXPECT_THROW(write_loss_csv(dir / "no" / "such" / "dir.csv", {}), FormatError);
}
