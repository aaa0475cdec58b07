#include "gramtex/extractor.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gramtex/ops.hpp"
#include "gramtex/random.hpp"

namespace gramtex {

void NetworkSpec::validate() const {
  std::set<std::string> names;
  std::size_t channels = 0;
  bool seen_conv = false;
  for (const auto& layer : layers) {
    if (!names.insert(layer.name).second) throw ValidationError("network spec: duplicate layer name " + layer.name);
    if (layer.kind != LayerKind::conv) continue;
    if (layer.in_channels == 0 || layer.out_channels == 0) {
      throw ValidationError("network spec: layer " + layer.name + " has zero channels");
    }
    if (seen_conv && layer.in_channels != channels) {
      throw ValidationError("network spec: layer " + layer.name + " expects " + std::to_string(layer.in_channels) +
                            " input channels but the previous conv produces " + std::to_string(channels));
    }
    channels = layer.out_channels;
    seen_conv = true;
  }
}

std::size_t NetworkSpec::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].name == name) return i;
  throw ContractError("network has no layer named \"" + name + "\"");
}

bool NetworkSpec::contains(const std::string& name) const {
  return std::any_of(layers.begin(), layers.end(), [&](const LayerSpec& l) { return l.name == name; });
}

std::vector<const LayerSpec*> NetworkSpec::conv_layers() const {
  std::vector<const LayerSpec*> out;
  for (const auto& l : layers)
    if (l.kind == LayerKind::conv) out.push_back(&l);
  return out;
}

std::size_t NetworkSpec::pools_before(const std::string& name) const {
  const std::size_t idx = index_of(name);
  std::size_t n = 0;
  for (std::size_t i = 0; i < idx; ++i)
    if (layers[i].kind == LayerKind::maxpool) ++n;
  return n;
}

std::size_t NetworkSpec::input_channels() const {
  for (const auto& l : layers)
    if (l.kind == LayerKind::conv) return l.in_channels;
  return 0;
}

namespace {

constexpr std::array<std::size_t, 5> kVggConvsPerStage{2, 2, 4, 4, 4};

NetworkSpec vgg19_with_widths(const std::vector<std::size_t>& widths) {
  NetworkSpec spec;
  std::size_t in = 3;
  std::size_t k = 0;
  for (std::size_t stage = 0; stage < kVggConvsPerStage.size(); ++stage) {
    for (std::size_t i = 0; i < kVggConvsPerStage[stage]; ++i) {
      const std::string suffix = std::to_string(stage + 1) + "_" + std::to_string(i + 1);
      const std::size_t out = widths[k++];
      spec.layers.push_back({"conv" + suffix, LayerKind::conv, in, out});
      spec.layers.push_back({"relu" + suffix, LayerKind::relu, 0, 0});
      in = out;
    }
    spec.layers.push_back({"pool" + std::to_string(stage + 1), LayerKind::maxpool, 0, 0});
  }
  return spec;
}

}  // namespace

NetworkSpec vgg19_spec(std::size_t width_divisor) {
  if (width_divisor == 0) throw ConfigError("vgg19_spec: width divisor must be positive");
  constexpr std::array<std::size_t, 5> stage_width{64, 128, 256, 512, 512};
  std::vector<std::size_t> widths;
  for (std::size_t stage = 0; stage < 5; ++stage) {
    const std::size_t w = std::max<std::size_t>(1, stage_width[stage] / width_divisor);
    for (std::size_t i = 0; i < kVggConvsPerStage[stage]; ++i) widths.push_back(w);
  }
  return vgg19_with_widths(widths);
}

NetworkSpec vgg19_spec_from_weights(const TwfFile& file) {
  const NetworkSpec skeleton = vgg19_spec();
  std::vector<std::size_t> widths;
  for (const auto* conv : skeleton.conv_layers()) {
    const auto& w = file.require(conv->name + ".weight");
    if (w.shape.size() != 4) {
      throw ValidationError("tensor \"" + w.name + "\" must have rank 4");
    }
    widths.push_back(w.shape[0]);
  }
  return vgg19_with_widths(widths);
}

TapSet default_texture_taps() { return {"conv2_2", "conv3_4", "conv4_4", "conv5_2"}; }

FeatureExtractor FeatureExtractor::random(NetworkSpec spec, std::uint64_t seed, DType dtype) {
  spec.validate();
  FeatureExtractor fx;
  fx.spec_ = std::move(spec);
  fx.dtype_ = dtype;
  fx.weights_.resize(fx.spec_.layers.size());
  fx.biases_.resize(fx.spec_.layers.size());
  Rng rng(seed);
  for (std::size_t i = 0; i < fx.spec_.layers.size(); ++i) {
    const auto& l = fx.spec_.layers[i];
    if (l.kind != LayerKind::conv) continue;
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in_channels * 9));
    std::vector<double> w(l.out_channels * l.in_channels * 9);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    fx.weights_[i] = Tensor::from_values({l.out_channels, l.in_channels, 3, 3}, w, dtype);
    fx.biases_[i] = Tensor::zeros({l.out_channels}, dtype);
  }
  return fx;
}

FeatureExtractor FeatureExtractor::from_file(const TwfFile& file, NetworkSpec spec, DType dtype) {
  spec.validate();
  FeatureExtractor fx;
  fx.spec_ = std::move(spec);
  fx.dtype_ = dtype;
  fx.weights_.resize(fx.spec_.layers.size());
  fx.biases_.resize(fx.spec_.layers.size());

  auto check_shape = [](const TwfTensor& t, const std::vector<std::uint32_t>& expected) {
    if (t.shape != expected) {
      Shape got(t.shape.begin(), t.shape.end()), want(expected.begin(), expected.end());
      throw ValidationError("tensor \"" + t.name + "\" has shape " + shape_string(got) + ", expected " +
                            shape_string(want));
    }
  };

  const auto& mean = file.require("input.mean");
  const auto& stdv = file.require("input.std");
  check_shape(mean, {3});
  check_shape(stdv, {3});
  for (std::size_t c = 0; c < 3; ++c) {
    if (!(stdv.values[c] > 0.0f)) throw ValidationError("tensor \"input.std\" must be positive");
    fx.mean_[c] = mean.values[c];
    fx.std_[c] = stdv.values[c];
  }

  for (std::size_t i = 0; i < fx.spec_.layers.size(); ++i) {
    const auto& l = fx.spec_.layers[i];
    if (l.kind != LayerKind::conv) continue;
    const auto& w = file.require(l.name + ".weight");
    const auto& b = file.require(l.name + ".bias");
    check_shape(w, {std::uint32_t(l.out_channels), std::uint32_t(l.in_channels), 3, 3});
    check_shape(b, {std::uint32_t(l.out_channels)});
    fx.weights_[i] = w.to_tensor(dtype);
    fx.biases_[i] = b.to_tensor(dtype);
  }
  return fx;
}

FeatureExtractor FeatureExtractor::load(const std::filesystem::path& path, DType dtype) {
  const auto file = TwfFile::load(path);
  return from_file(file, vgg19_spec_from_weights(file), dtype);
}

FeatureExtractor FeatureExtractor::load(const std::filesystem::path& path, NetworkSpec spec, DType dtype) {
  return from_file(TwfFile::load(path), std::move(spec), dtype);
}

TwfFile FeatureExtractor::to_file() const {
  TwfFile file;
  file.add("input.mean", Tensor::from_values({3}, std::span<const double>(mean_)));
  file.add("input.std", Tensor::from_values({3}, std::span<const double>(std_)));
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    if (spec_.layers[i].kind != LayerKind::conv) continue;
    file.add(spec_.layers[i].name + ".weight", weights_[i]);
    file.add(spec_.layers[i].name + ".bias", biases_[i]);
  }
  return file;
}

void FeatureExtractor::save(const std::filesystem::path& path) const { to_file().save(path); }

void FeatureExtractor::set_input_normalization(const std::array<double, 3>& mean, const std::array<double, 3>& std) {
  for (double s : std)
    if (!(s > 0.0)) throw ConfigError("input std must be positive");
  mean_ = mean;
  std_ = std;
}

const Tensor& FeatureExtractor::weight(const std::string& conv) const {
  const auto i = spec_.index_of(conv);
  if (spec_.layers[i].kind != LayerKind::conv) throw ContractError(conv + " is not a conv layer");
  return weights_[i];
}

const Tensor& FeatureExtractor::bias(const std::string& conv) const {
  const auto i = spec_.index_of(conv);
  if (spec_.layers[i].kind != LayerKind::conv) throw ContractError(conv + " is not a conv layer");
  return biases_[i];
}

Tensor& FeatureExtractor::weight(const std::string& conv) {
  return const_cast<Tensor&>(std::as_const(*this).weight(conv));
}

Tensor& FeatureExtractor::bias(const std::string& conv) { return const_cast<Tensor&>(std::as_const(*this).bias(conv)); }

FeatureExtractor FeatureExtractor::to(DType dtype) const {
  FeatureExtractor out = *this;
  out.dtype_ = dtype;
  for (auto& w : out.weights_)
    if (w.defined()) w = w.to(dtype);
  for (auto& b : out.biases_)
    if (b.defined()) b = b.to(dtype);
  return out;
}

std::vector<Tensor> FeatureExtractor::forward_with_taps(const Tensor& image, const TapSet& taps) const {
  if (image.ndim() != 4 || image.dim(1) != 3) {
    throw DimensionError("extractor: image must be [B,3,H,W], got " + shape_string(image.shape()));
  }
  return forward_without_norm(normalize_channels(image, mean_, std_), taps);
}

std::vector<Tensor> FeatureExtractor::forward_without_norm(const Tensor& input, const TapSet& taps) const {
  if (input.ndim() != 4) throw DimensionError("extractor: input must be [B,C,H,W], got " + shape_string(input.shape()));
  if (input.dim(1) != spec_.input_channels()) {
    throw DimensionError("extractor: axis 1 (channels) is " + std::to_string(input.dim(1)) + ", network expects " +
                         std::to_string(spec_.input_channels()));
  }
  if (input.dtype() != dtype_) {
    throw ContractError("extractor: input dtype " + std::string(dtype_name(input.dtype())) + " but weights are " +
                        std::string(dtype_name(dtype_)));
  }
  if (taps.empty()) throw ContractError("extractor: empty tap set");

  // Tap k is captured after the relu following its conv layer.
  std::vector<std::size_t> capture_at(taps.size());
  std::size_t last = 0;
  for (std::size_t k = 0; k < taps.size(); ++k) {
    const std::size_t idx = spec_.index_of(taps[k]);
    if (spec_.layers[idx].kind != LayerKind::conv) {
      throw ContractError("extractor: tap \"" + taps[k] + "\" is not a conv layer");
    }
    std::size_t at = idx;
    if (idx + 1 < spec_.layers.size() && spec_.layers[idx + 1].kind == LayerKind::relu) at = idx + 1;
    capture_at[k] = at;
    last = std::max(last, at);
  }

  std::vector<Tensor> out(taps.size());
  Tensor x = input;
  for (std::size_t i = 0; i <= last; ++i) {
    const auto& layer = spec_.layers[i];
    switch (layer.kind) {
      case LayerKind::conv:
        x = conv2d(x, weights_[i], biases_[i], 1, 1);
        break;
      case LayerKind::relu:
        x = relu(x);
        break;
      case LayerKind::maxpool:
        if (x.dim(2) < 2 || x.dim(3) < 2 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
          throw GeometryError("extractor: " + layer.name + " receives a " + std::to_string(x.dim(2)) + "x" +
                              std::to_string(x.dim(3)) +
                              " map; input too small or not divisible for the deepest requested tap");
        }
        x = max_pool2(x);
        break;
    }
    for (std::size_t k = 0; k < taps.size(); ++k)
      if (capture_at[k] == i) out[k] = x;
  }
  return out;
}

std::vector<FixtureComparison> compare_with_fixture(const FeatureExtractor& extractor, const TwfFile& fixture) {
  const Tensor input = fixture.require("input").to_tensor(extractor.dtype());
  TapSet taps;
  std::vector<const TwfTensor*> expected;
  for (const auto& t : fixture.tensors) {
    if (t.name.rfind("tap.", 0) == 0) {
      taps.push_back(t.name.substr(4));
      expected.push_back(&t);
    }
  }
  if (taps.empty()) throw ValidationError("fixture has no \"tap.<layer>\" tensors");
  NoGradGuard no_grad;
  const auto got = extractor.forward_with_taps(input, taps);
  std::vector<FixtureComparison> report;
  for (std::size_t k = 0; k < taps.size(); ++k) {
    const Shape want(expected[k]->shape.begin(), expected[k]->shape.end());
    if (got[k].shape() != want) {
      throw ValidationError("fixture tensor \"" + expected[k]->name + "\" has shape " + shape_string(want) +
                            ", engine produced " + shape_string(got[k].shape()));
    }
    const auto values = got[k].to_vector();
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      worst = std::max(worst, std::abs(values[i] - static_cast<double>(expected[k]->values[i])));
    }
    report.push_back({taps[k], worst});
  }
  return report;
}

}  // namespace gramtex
