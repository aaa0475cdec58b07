#include <gtest/gtest.h>

#include <fstream>

#include "gramtex/extractor.hpp"
#include "gramtex/ops.hpp"
#include "support/oracles.hpp"

using namespace gramtex;
using namespace gramtex::testing;

TEST(NetworkSpec, Vgg19Layout) {
  const NetworkSpec spec = vgg19_spec();
  std::size_t convs = 0, pools = 0;
  for (const auto& l : spec.layers) {
    convs += l.kind == LayerKind::conv;
    pools += l.kind == LayerKind::maxpool;
  }
  EXPECT_EQ(convs, 16u);
  EXPECT_EQ(pools, 5u);
  EXPECT_EQ(spec.layers[spec.index_of("conv2_2")].out_channels, 128u);
  EXPECT_EQ(spec.layers[spec.index_of("conv1_1")].in_channels, 3u);
  EXPECT_EQ(spec.layers[spec.index_of("conv5_4")].out_channels, 512u);
  EXPECT_EQ(spec.pools_before("conv2_1"), 1u);
  EXPECT_EQ(spec.pools_before("conv5_2"), 4u);
  EXPECT_THROW(spec.index_of("conv6_1"), ContractError);
  EXPECT_EQ(vgg19_spec(8).layers[spec.index_of("conv2_2")].out_channels, 16u);
  EXPECT_THROW(vgg19_spec(0), ConfigError);
}

TEST(NetworkSpec, ValidationCatchesBrokenChains) {
  NetworkSpec spec = two_conv_spec();
  spec.layers[2].in_channels = 5;
  EXPECT_THROW(spec.validate(), ValidationError);
  NetworkSpec dup = two_conv_spec();
  dup.layers[2].name = "conv1_1";
  EXPECT_THROW(dup.validate(), ValidationError);
}

TEST(Extractor, FullWidthTapShapes) {
  const auto fx = FeatureExtractor::random(vgg19_spec(), 1, DType::f32);
  const Tensor x = smooth_image(64, 64, 2, DType::f32);
  NoGradGuard ng;
  const auto taps = fx.forward_with_taps(x, default_texture_taps());
  ASSERT_EQ(taps.size(), 4u);
  EXPECT_EQ(taps[0].shape(), (Shape{1, 128, 32, 32}));
  EXPECT_EQ(taps[1].shape(), (Shape{1, 256, 16, 16}));
  EXPECT_EQ(taps[2].shape(), (Shape{1, 512, 8, 8}));
  EXPECT_EQ(taps[3].shape(), (Shape{1, 512, 4, 4}));
  EXPECT_EQ(fx.to_file().tensors.size(), 34u);
  EXPECT_EQ(fx.weight("conv1_1").shape(), (Shape{64, 3, 3, 3}));
}

TEST(Extractor, TapsAreReluOutputsInRequestedOrder) {
  const auto fx = FeatureExtractor::random(two_conv_spec(), 3, DType::f64);
  const Tensor x = random_tensor({1, 3, 6, 6}, 4, DType::f64, 0.0, 1.0);
  const auto both = fx.forward_with_taps(x, {"conv1_2", "conv1_1"});
  const Tensor c1 = relu(conv2d(x, fx.weight("conv1_1"), fx.bias("conv1_1"), 1, 1));
  const Tensor c2 = relu(conv2d(c1, fx.weight("conv1_2"), fx.bias("conv1_2"), 1, 1));
  EXPECT_EQ(both[0].to_vector(), c2.to_vector());
  EXPECT_EQ(both[1].to_vector(), c1.to_vector());
}

TEST(Extractor, ZeroImageGivesZeroTaps) {
  const auto fx = FeatureExtractor::random(vgg19_spec(8), 5, DType::f32);
  NoGradGuard ng;
  for (const auto& t : fx.forward_with_taps(Tensor::zeros({1, 3, 64, 64}), default_texture_taps())) {
    for (double v : t.to_vector()) ASSERT_EQ(v, 0.0);
  }
}

TEST(Extractor, DeterministicTaps) {
  const auto fx = FeatureExtractor::random(vgg19_spec(8), 6, DType::f32);
  const Tensor x = smooth_image(64, 64, 7, DType::f32);
  NoGradGuard ng;
  const auto a = fx.forward_with_taps(x, default_texture_taps());
  const auto b = fx.forward_with_taps(x, default_texture_taps());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].to_vector(), b[k].to_vector());
}

TEST(Extractor, InputNormalizationIsApplied) {
  auto fx = FeatureExtractor::random(two_conv_spec(), 8, DType::f64);
  const Tensor x = random_tensor({1, 3, 5, 5}, 9, DType::f64, 0.0, 1.0);
  const std::array<double, 3> m{0.485, 0.456, 0.406}, s{0.229, 0.224, 0.225};
  fx.set_input_normalization(m, s);
  const auto a = fx.forward_with_taps(x, {"conv1_2"});
  const auto b = fx.forward_without_norm(normalize_channels(x, m, s), {"conv1_2"});
  EXPECT_EQ(a[0].to_vector(), b[0].to_vector());
  EXPECT_THROW(fx.set_input_normalization(m, {1.0, 0.0, 1.0}), ConfigError);
}

TEST(Extractor, TapAndGeometryErrors) {
  const auto fx = FeatureExtractor::random(vgg19_spec(8), 10, DType::f32);
  const Tensor x = smooth_image(64, 64, 11, DType::f32);
  EXPECT_THROW(fx.forward_with_taps(x, {"relu2_2"}), ContractError);
  EXPECT_THROW(fx.forward_with_taps(x, {"conv9_9"}), ContractError);
  EXPECT_THROW(fx.forward_with_taps(x, {}), ContractError);
  EXPECT_THROW(fx.forward_with_taps(smooth_image(36, 36, 12, DType::f32), {"conv4_1"}), GeometryError);
  EXPECT_THROW(fx.forward_with_taps(Tensor::zeros({1, 1, 8, 8}), {"conv1_1"}), DimensionError);
  EXPECT_THROW(fx.forward_with_taps(smooth_image(8, 8, 13, DType::f64), {"conv1_1"}), ContractError);
}

TEST(Extractor, SaveReloadIsBitIdentical) {
  const auto dir = scratch_dir("extractor");
  auto fx = FeatureExtractor::random(vgg19_spec(8), 14, DType::f32);
  fx.set_input_normalization({0.4, 0.5, 0.6}, {0.2, 0.25, 0.3});
  fx.save(dir / "vgg.twf1");
  const auto back = FeatureExtractor::load(dir / "vgg.twf1");
  for (const auto* conv : fx.spec().conv_layers()) {
    EXPECT_EQ(back.weight(conv->name).to_vector(), fx.weight(conv->name).to_vector());
    EXPECT_EQ(back.bias(conv->name).to_vector(), fx.bias(conv->name).to_vector());
    EXPECT_EQ(back.spec().layers[back.spec().index_of(conv->name)].out_channels, conv->out_channels);
  }
  EXPECT_FLOAT_EQ(float(back.input_std()[1]), 0.25f);
  EXPECT_EQ(back.to_file().tensors.size(), 34u);
}

TEST(Extractor, LoadValidation) {
  const auto dir = scratch_dir("extractor_bad");
  TwfFile good = FeatureExtractor::random(vgg19_spec(8), 15).to_file();

  TwfFile missing;
  for (const auto& t : good.tensors)
    if (t.name != "conv1_1.bias") missing.add(t);
  missing.save(dir / "missing.twf1");
  try {
    FeatureExtractor::load(dir / "missing.twf1");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("conv1_1.bias"), std::string::npos);
  }

  TwfFile wrong;
  for (auto t : good.tensors) {
    if (t.name == "conv2_1.bias") t.values.push_back(0.f), t.shape = {std::uint32_t(t.values.size())};
    wrong.add(t);
  }
  EXPECT_THROW(FeatureExtractor::from_file(wrong, vgg19_spec(8)), ValidationError);

  TwfFile bad_std;
  for (auto t : good.tensors) {
    if (t.name == "input.std") t.values[0] = 0.f;
    bad_std.add(t);
  }
  EXPECT_THROW(FeatureExtractor::from_file(bad_std, vgg19_spec(8)), ValidationError);

  std::ofstream(dir / "magic.twf1") << "XXXX\x01\x00\x00\x00";
  EXPECT_THROW(FeatureExtractor::load(dir / "magic.twf1"), FormatError);
}

TEST(Extractor, FixtureComparison) {
  const auto fx = FeatureExtractor::random(vgg19_spec(8), 16, DType::f32);
  const Tensor input = random_tensor({1, 3, 64, 64}, 17, DType::f32, 0.0, 1.0);
  TwfFile fixture;
  fixture.add("input", input);
  {
    NoGradGuard ng;
    const auto taps = fx.forward_with_taps(input, default_texture_taps());
    for (std::size_t k = 0; k < taps.size(); ++k) fixture.add("tap." + default_texture_taps()[k], taps[k]);
  }
  const auto report = compare_with_fixture(fx, fixture);
  ASSERT_EQ(report.size(), 4u);
  for (const auto& r : report) EXPECT_EQ(r.max_abs_diff, 0.0) << r.layer;

  TwfFile no_taps;
  no_taps.add("input", input);
  EXPECT_THROW(compare_with_fixture(fx, no_taps), ValidationError);
}

TEST(Extractor, DtypeConversion) {
  const auto fx = FeatureExtractor::random(two_conv_spec(), 18, DType::f32);
  const auto fd = fx.to(DType::f64);
  EXPECT_EQ(fd.dtype(), DType::f64);
  EXPECT_EQ(fd.weight("conv1_2").to_vector(), fx.weight("conv1_2").to_vector());
}
