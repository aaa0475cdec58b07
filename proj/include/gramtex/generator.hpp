#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gramtex/adam.hpp"
#include "gramtex/extractor.hpp"
#include "gramtex/tensor.hpp"
#include "gramtex/texture_loss.hpp"
#include "gramtex/twf.hpp"

namespace gramtex {

struct GeneratorConfig {
  std::size_t blocks = 10;
  std::size_t width = 64;
  std::size_t scale = 4;
  std::size_t kernel = 3;

  static GeneratorConfig standard(std::size_t scale = 4) { return {10, 64, scale, 3}; }
  static GeneratorConfig shallow(std::size_t scale = 4) { return {6, 32, scale, 3}; }

  // Throws ConfigError unless blocks, width >= 1, scale a power of two >= 2, kernel odd.
  void validate() const;
  std::size_t upsample_stages() const;
};

// Closed-form parameter count of the architecture below.
std::size_t parameter_count(const GeneratorConfig& config);

// Residual super-resolution network working on the low-resolution grid:
//   head conv (3 -> W)
//   B x [conv -> relu -> conv, + identity]
//   log2(s) x [conv (W -> 4W) -> pixel_shuffle(2) -> relu]
//   tail conv (W -> 3)
//   output = tail + bicubic_upsample(input, s)
class Generator {
 public:
  Generator() = default;

  // Uniform He-style initialization bounded by sqrt(6 / fan_in), zero biases.
  static Generator create(const GeneratorConfig& config, std::uint64_t seed, DType dtype = DType::f32);

  Tensor forward(const Tensor& lr_image) const;

  const GeneratorConfig& config() const { return config_; }
  DType dtype() const { return dtype_; }

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  std::size_t parameter_count() const;

  void set_requires_grad(bool on);
  void zero_grad();

  // Checkpoint in the TWF1 container: "meta.config" = (B, W, s) plus one tensor per parameter.
  TwfFile to_file() const;
  static Generator from_file(const TwfFile& file, DType dtype = DType::f32);
  void save(const std::filesystem::path& path) const;
  static Generator load(const std::filesystem::path& path, DType dtype = DType::f32);

 private:
  void add_conv(const std::string& name, std::size_t in, std::size_t out);
  Tensor conv(std::size_t index, const Tensor& x) const;

  GeneratorConfig config_;
  DType dtype_ = DType::f32;
  std::vector<std::string> names_;  // "<conv>.weight", "<conv>.bias", ...
  std::vector<Tensor> params_;      // weight/bias pairs in layer order
};

enum class TrainPhase { mse_pretrain, texture };

std::string_view phase_name(TrainPhase phase);

struct TrainRecord {
  std::uint64_t step = 0;
  TrainPhase phase = TrainPhase::mse_pretrain;
  double loss = 0.0;
};

struct TrainState {
  Generator generator;
  AdamState optimizer;
  TrainPhase phase = TrainPhase::mse_pretrain;
  std::uint64_t step = 0;
  std::vector<TrainRecord> history;

  static TrainState create(Generator generator, AdamConfig adam = {});
  // Only mse_pretrain -> texture is allowed; anything else throws ContractError.
  void enter_phase(TrainPhase next);
};

struct TrainBatch {
  Tensor lr;  // [B, 3, h, w]
  Tensor hr;  // [B, 3, h*s, w*s]
  // Optional [B, R, h*s, w*s] masks; when present the texture phase uses the
  // semantically guided loss.
  Tensor masks;
};

// One optimizer update. The texture objective is divided by the batch size so
// the learning rate does not depend on it. Returns the pre-update loss.
double train_step(TrainState& state, const TrainBatch& batch, const FeatureExtractor& extractor,
                  const LossConfig& loss_config);

}  // namespace gramtex
