#include "gramtex/generator.hpp"

#include <bit>
#include <cmath>

#include "gramtex/imaging.hpp"
#include "gramtex/ops.hpp"
#include "gramtex/random.hpp"

namespace gramtex {

void GeneratorConfig::validate() const {
  if (blocks < 1) throw ConfigError("generator: at least one residual block is required");
  if (width < 1) throw ConfigError("generator: trunk width must be positive");
  if (scale < 2 || !std::has_single_bit(scale)) {
    throw ConfigError("generator: scale must be a power of two >= 2, got " + std::to_string(scale));
  }
  if (kernel % 2 == 0) throw ConfigError("generator: kernel size must be odd");
}

std::size_t GeneratorConfig::upsample_stages() const { return static_cast<std::size_t>(std::countr_zero(scale)); }

std::size_t parameter_count(const GeneratorConfig& c) {
  c.validate();
  const std::size_t k2 = c.kernel * c.kernel;
  auto conv = [k2](std::size_t in, std::size_t out) { return out * in * k2 + out; };
  return conv(3, c.width) + c.blocks * 2 * conv(c.width, c.width) + c.upsample_stages() * conv(c.width, 4 * c.width) +
         conv(c.width, 3);
}

void Generator::add_conv(const std::string& name, std::size_t in, std::size_t out) {
  const std::size_t k = config_.kernel;
  names_.push_back(name + ".weight");
  params_.push_back(Tensor::zeros({out, in, k, k}, dtype_));
  names_.push_back(name + ".bias");
  params_.push_back(Tensor::zeros({out}, dtype_));
}

Generator Generator::create(const GeneratorConfig& config, std::uint64_t seed, DType dtype) {
  config.validate();
  Generator g;
  g.config_ = config;
  g.dtype_ = dtype;
  const std::size_t W = config.width;
  g.add_conv("head", 3, W);
  for (std::size_t b = 0; b < config.blocks; ++b) {
    g.add_conv("block" + std::to_string(b) + ".conv1", W, W);
    g.add_conv("block" + std::to_string(b) + ".conv2", W, W);
  }
  for (std::size_t u = 0; u < config.upsample_stages(); ++u) g.add_conv("up" + std::to_string(u), W, 4 * W);
  g.add_conv("tail", W, 3);

  Rng rng(seed);
  for (std::size_t i = 0; i < g.params_.size(); i += 2) {
    auto& w = g.params_[i];
    const double fan_in = static_cast<double>(w.dim(1) * w.dim(2) * w.dim(3));
    const double bound = std::sqrt(6.0 / fan_in);
    dispatch(dtype, [&]<class T>() {
      for (auto& v : w.mutable_data<T>()) v = static_cast<T>(rng.uniform(-bound, bound));
    });
  }
  g.set_requires_grad(true);
  return g;
}

Tensor Generator::conv(std::size_t index, const Tensor& x) const {
  return conv2d(x, params_[2 * index], params_[2 * index + 1], 1, config_.kernel / 2);
}

Tensor Generator::forward(const Tensor& lr_image) const {
  if (lr_image.ndim() != 4 || lr_image.dim(1) != 3) {
    throw DimensionError("generator: input must be [B,3,h,w], got " + shape_string(lr_image.shape()));
  }
  if (lr_image.dim(2) < 4 || lr_image.dim(3) < 4) {
    throw GeometryError("generator: input extent must be at least 4x4, got " + std::to_string(lr_image.dim(2)) + "x" +
                        std::to_string(lr_image.dim(3)));
  }
  if (lr_image.dtype() != dtype_) throw ContractError("generator: input dtype does not match parameters");

  std::size_t layer = 0;
  Tensor x = conv(layer++, lr_image);
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    Tensor y = relu(conv(layer++, x));
    y = conv(layer++, y);
    x = add(x, y);
  }
  for (std::size_t u = 0; u < config_.upsample_stages(); ++u) {
    x = relu(pixel_shuffle(conv(layer++, x), 2));
  }
  const Tensor residual = conv(layer++, x);
  return add(residual, bicubic_upsample(lr_image, config_.scale));
}

std::size_t Generator::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

void Generator::set_requires_grad(bool on) {
  for (auto& p : params_) p.set_requires_grad(on);
}

void Generator::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

TwfFile Generator::to_file() const {
  TwfFile file;
  file.add("meta.config", Tensor::from_values({3}, {double(config_.blocks), double(config_.width), double(config_.scale)}));
  for (std::size_t i = 0; i < params_.size(); ++i) file.add(names_[i], params_[i]);
  return file;
}

Generator Generator::from_file(const TwfFile& file, DType dtype) {
  const auto& meta = file.require("meta.config");
  if (meta.values.size() != 3) throw ValidationError("tensor \"meta.config\" must hold 3 values");
  GeneratorConfig config;
  config.blocks = static_cast<std::size_t>(meta.values[0]);
  config.width = static_cast<std::size_t>(meta.values[1]);
  config.scale = static_cast<std::size_t>(meta.values[2]);
  Generator g = create(config, 0, dtype);
  for (std::size_t i = 0; i < g.params_.size(); ++i) {
    const auto& t = file.require(g.names_[i]);
    const Shape got(t.shape.begin(), t.shape.end());
    if (got != g.params_[i].shape()) {
      throw ValidationError("tensor \"" + t.name + "\" has shape " + shape_string(got) + ", expected " +
                            shape_string(g.params_[i].shape()));
    }
    g.params_[i] = t.to_tensor(dtype);
  }
  g.set_requires_grad(true);
  return g;
}

void Generator::save(const std::filesystem::path& path) const { to_file().save(path); }

Generator Generator::load(const std::filesystem::path& path, DType dtype) {
  return from_file(TwfFile::load(path), dtype);
}

std::string_view phase_name(TrainPhase phase) {
  return phase == TrainPhase::mse_pretrain ? "mse-pretrain" : "texture";
}

TrainState TrainState::create(Generator generator, AdamConfig adam) {
  TrainState s;
  generator.set_requires_grad(true);
  s.optimizer = AdamState::for_parameters(generator.parameters(), adam);
  s.generator = std::move(generator);
  return s;
}

void TrainState::enter_phase(TrainPhase next) {
  if (!(phase == TrainPhase::mse_pretrain && next == TrainPhase::texture)) {
    throw ContractError("training phases only advance from mse-pretrain to texture");
  }
  phase = next;
}

double train_step(TrainState& state, const TrainBatch& batch, const FeatureExtractor& extractor,
                  const LossConfig& loss_config) {
  const auto& cfg = state.generator.config();
  if (batch.lr.ndim() != 4 || batch.hr.ndim() != 4) throw DimensionError("train_step: lr and hr must be [B,3,H,W]");
  if (batch.lr.dim(0) != batch.hr.dim(0)) throw ContractError("train_step: lr and hr batch sizes differ");
  if (batch.hr.dim(2) != batch.lr.dim(2) * cfg.scale || batch.hr.dim(3) != batch.lr.dim(3) * cfg.scale) {
    throw ContractError("train_step: hr extent " + std::to_string(batch.hr.dim(2)) + "x" +
                        std::to_string(batch.hr.dim(3)) + " is not lr extent x" + std::to_string(cfg.scale));
  }
  if (batch.masks.defined()) {
    if (batch.masks.ndim() != 4 || batch.masks.dim(0) != batch.hr.dim(0) || batch.masks.dim(2) != batch.hr.dim(2) ||
        batch.masks.dim(3) != batch.hr.dim(3)) {
      throw ContractError("train_step: masks " + shape_string(batch.masks.shape()) + " do not match hr " +
                          shape_string(batch.hr.shape()));
    }
  }

  state.generator.zero_grad();
  const Tensor est = state.generator.forward(batch.lr);
  Tensor loss;
  if (state.phase == TrainPhase::mse_pretrain) {
    loss = mse_loss(est, batch.hr);
  } else {
    Tensor total;
    if (batch.masks.defined()) {
      total = semantic_texture_loss(est, batch.hr, batch.masks, extractor, loss_config);
    } else {
      const auto taps_est = extractor.forward_with_taps(est, loss_config.layers);
      std::vector<Tensor> taps_hr;
      {
        NoGradGuard no_grad;
        taps_hr = extractor.forward_with_taps(batch.hr, loss_config.layers);
      }
      total = texture_loss(taps_est, taps_hr, loss_config);
    }
    loss = scale(total, 1.0 / static_cast<double>(batch.lr.dim(0)));
  }
  const double value = loss.item();
  backward(loss);
  adam_step(state.generator.parameters(), state.optimizer);
  state.generator.zero_grad();
  state.history.push_back({state.step, state.phase, value});
  ++state.step;
  return value;
}

}  // namespace gramtex
