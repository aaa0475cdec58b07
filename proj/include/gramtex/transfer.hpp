#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <vector>

#include "gramtex/extractor.hpp"
#include "gramtex/tensor.hpp"
#include "gramtex/texture_loss.hpp"

namespace gramtex {

enum class InitMode { given_image, white, bicubic_up };

struct TransferConfig {
  std::size_t steps = 500;
  double learning_rate = 0.01;
  LossConfig loss;
  std::optional<MaskSet> masks;
  bool clamp = true;
  InitMode init_mode = InitMode::given_image;
  // Upsampling factor for InitMode::bicubic_up.
  std::size_t init_scale = 4;

  void validate() const;
};

struct TransferReport {
  // trace[k] is the loss of the image entering step k.
  std::vector<double> trace;
  // Loss of final_image, evaluated after the last update.
  double final_loss = 0.0;
  Tensor final_image;
  std::chrono::duration<double> duration{0};
};

// Optimizes the pixels of a copy of `init` with Adam so that its Gram matrices
// match those of `style`. The style taps are computed once per run.
TransferReport optimize_image(const Tensor& init, const Tensor& style, const FeatureExtractor& extractor,
                              const TransferConfig& config);

// Resolves config.init_mode against the style image:
// given_image -> `given`, white -> all ones, bicubic_up -> bicubic down-then-up of `style` by init_scale.
Tensor make_initial_image(InitMode mode, const Tensor& given, const Tensor& style, std::size_t scale);

// init = bicubic_upsample(lr_image, scale), style = hr_reference.
TransferReport sr_refine(const Tensor& lr_image, const Tensor& hr_reference, std::size_t scale,
                         const FeatureExtractor& extractor, const TransferConfig& config);

// True when every 25-step window mean is at most 1% above the previous window's mean.
bool moving_average_non_increasing(const std::vector<double>& trace, std::size_t window = 25,
                                   double tolerance = 0.01);

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& trace);

}  // namespace gramtex
