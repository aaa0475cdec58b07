#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gramtex/tensor.hpp"
#include "gramtex/twf.hpp"

namespace gramtex {

enum class LayerKind { conv, relu, maxpool };

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
};

// Ordered layer list of a VGG-style trunk. Convolutions are 3x3, stride 1, pad 1.
struct NetworkSpec {
  std::vector<LayerSpec> layers;

  // Throws ValidationError on duplicate names or a broken channel chain.
  void validate() const;
  // Index of the named layer; throws ContractError when absent.
  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<const LayerSpec*> conv_layers() const;
  // Number of max-pool layers strictly before the named layer.
  std::size_t pools_before(const std::string& name) const;
  std::size_t input_channels() const;
};

// VGG-19 feature trunk: 16 convolutions, 5 pools, widths 64 | 128 | 256 | 512 | 512.
// A width divisor > 1 yields a slimmer network with identical layer names, used
// for fast random-weight experiments.
NetworkSpec vgg19_spec(std::size_t width_divisor = 1);

// VGG-19 topology with per-layer widths read from "<conv>.weight" shapes.
NetworkSpec vgg19_spec_from_weights(const TwfFile& file);

// Ordered names of layers whose post-activation outputs are captured.
using TapSet = std::vector<std::string>;

TapSet default_texture_taps();

class FeatureExtractor {
 public:
  FeatureExtractor() = default;

  // He-uniform random weights, zero biases, identity input normalization.
  static FeatureExtractor random(NetworkSpec spec, std::uint64_t seed, DType dtype = DType::f32);
  static FeatureExtractor from_file(const TwfFile& file, NetworkSpec spec, DType dtype = DType::f32);
  // Infers the VGG-19 widths from the file.
  static FeatureExtractor load(const std::filesystem::path& path, DType dtype = DType::f32);
  static FeatureExtractor load(const std::filesystem::path& path, NetworkSpec spec, DType dtype = DType::f32);

  TwfFile to_file() const;
  void save(const std::filesystem::path& path) const;

  // Normalizes image channels by (x - mean) / std, runs the trunk up to the
  // deepest tap and returns the post-relu outputs of the tapped conv layers in
  // tap order. Differentiable with respect to the image.
  std::vector<Tensor> forward_with_taps(const Tensor& image, const TapSet& taps) const;
  // Same propagation without the input normalization.
  std::vector<Tensor> forward_without_norm(const Tensor& input, const TapSet& taps) const;

  const NetworkSpec& spec() const { return spec_; }
  DType dtype() const { return dtype_; }
  const std::array<double, 3>& input_mean() const { return mean_; }
  const std::array<double, 3>& input_std() const { return std_; }
  void set_input_normalization(const std::array<double, 3>& mean, const std::array<double, 3>& std);

  const Tensor& weight(const std::string& conv) const;
  const Tensor& bias(const std::string& conv) const;
  Tensor& weight(const std::string& conv);
  Tensor& bias(const std::string& conv);

  FeatureExtractor to(DType dtype) const;

 private:
  NetworkSpec spec_;
  DType dtype_ = DType::f32;
  std::array<double, 3> mean_{0.0, 0.0, 0.0};
  std::array<double, 3> std_{1.0, 1.0, 1.0};
  // Indexed like spec_.layers; undefined for non-conv layers.
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

// Per-tap agreement between this engine and a reference activation fixture
// (TWF1 with "input" and "tap.<layer>" tensors).
struct FixtureComparison {
  std::string layer;
  double max_abs_diff = 0.0;
};

std::vector<FixtureComparison> compare_with_fixture(const FeatureExtractor& extractor, const TwfFile& fixture);

}  // namespace gramtex
