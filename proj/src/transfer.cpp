#include "gramtex/transfer.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>

#include "gramtex/adam.hpp"
#include "gramtex/imaging.hpp"
#include "gramtex/ops.hpp"

namespace gramtex {

void TransferConfig::validate() const {
  if (steps < 1) throw ConfigError("transfer: at least one step is required");
  if (!(learning_rate > 0.0)) throw ConfigError("transfer: learning rate must be positive");
  if (init_mode == InitMode::bicubic_up && init_scale < 1) throw ConfigError("transfer: init scale must be positive");
  loss.validate();
}

Tensor make_initial_image(InitMode mode, const Tensor& given, const Tensor& style, std::size_t scale) {
  switch (mode) {
    case InitMode::given_image:
      if (!given.defined()) throw ContractError("transfer: init mode given-image needs an init image");
      return given.detach();
    case InitMode::white:
      return Tensor::full(style.shape(), 1.0, style.dtype());
    case InitMode::bicubic_up:
      return bicubic_upsample(bicubic_downsample(style, scale), scale);
  }
  throw ContractError("transfer: unknown init mode");
}

namespace {

Tensor loss_of(const Tensor& image, const Tensor& style, const std::vector<GramMatrix>& style_grams,
               const FeatureExtractor& extractor, const TransferConfig& config) {
  if (config.masks) return semantic_texture_loss(image, style, *config.masks, extractor, config.loss);
  return texture_loss(extractor.forward_with_taps(image, config.loss.layers), style_grams, config.loss);
}

}  // namespace

TransferReport optimize_image(const Tensor& init, const Tensor& style, const FeatureExtractor& extractor,
                              const TransferConfig& config) {
  config.validate();
  if (init.shape() != style.shape()) {
    throw DimensionError("transfer: init " + shape_string(init.shape()) + " and style " +
                         shape_string(style.shape()) + " differ");
  }
  const auto started = std::chrono::steady_clock::now();

  std::vector<GramMatrix> style_grams;
  if (!config.masks) {
    NoGradGuard no_grad;
    style_grams = target_grams(extractor.forward_with_taps(style, config.loss.layers), config.loss);
  }

  Tensor image = init.detach();
  image.set_requires_grad(true);
  std::vector<Tensor> params{image};
  AdamState adam = AdamState::for_parameters(params, AdamConfig{config.learning_rate});

  TransferReport report;
  report.trace.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    image.zero_grad();
    const Tensor loss = loss_of(image, style, style_grams, extractor, config);
    report.trace.push_back(loss.item());
    if (loss.requires_grad()) {
      backward(loss);
      adam_step(params, adam);
    }
    if (config.clamp) {
      dispatch(image.dtype(), [&]<class T>() {
        for (auto& v : image.mutable_data<T>()) v = std::clamp(v, T(0), T(1));
      });
    }
  }
  image.zero_grad();
  {
    NoGradGuard no_grad;
    report.final_loss = loss_of(image, style, style_grams, extractor, config).item();
  }
  report.final_image = image.detach();
  report.duration = std::chrono::steady_clock::now() - started;
  return report;
}

TransferReport sr_refine(const Tensor& lr_image, const Tensor& hr_reference, std::size_t scale,
                         const FeatureExtractor& extractor, const TransferConfig& config) {
  if (lr_image.ndim() != 4 || hr_reference.ndim() != 4) throw DimensionError("sr_refine: images must be [B,C,H,W]");
  if (scale == 0 || hr_reference.dim(2) != lr_image.dim(2) * scale || hr_reference.dim(3) != lr_image.dim(3) * scale) {
    throw ContractError("sr_refine: reference " + std::to_string(hr_reference.dim(2)) + "x" +
                        std::to_string(hr_reference.dim(3)) + " is not " + std::to_string(lr_image.dim(2)) + "x" +
                        std::to_string(lr_image.dim(3)) + " times " + std::to_string(scale));
  }
  TransferConfig cfg = config;
  cfg.init_mode = InitMode::given_image;
  return optimize_image(bicubic_upsample(lr_image, scale), hr_reference, extractor, cfg);
}

bool moving_average_non_increasing(const std::vector<double>& trace, std::size_t window, double tolerance) {
  if (window == 0 || trace.size() < 2 * window) return true;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t start = 0; start + window <= trace.size(); start += window) {
    double acc = 0.0;
    for (std::size_t i = start; i < start + window; ++i) acc += trace[i];
    const double avg = acc / static_cast<double>(window);
    if (avg > previous * (1.0 + tolerance)) return false;
    previous = avg;
  }
  return true;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "step,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) out << i << ',' << trace[i] << '\n';
  if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace gramtex
