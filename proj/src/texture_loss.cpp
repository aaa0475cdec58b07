#include "gramtex/texture_loss.hpp"

#include "gramtex/ops.hpp"

namespace gramtex {

GramMatrix gram(const Tensor& features, std::string layer) {
  GramMatrix g;
  g.layer = std::move(layer);
  g.matrix = gram_matrix(features);
  const bool batched = features.ndim() == 4;
  g.channels = features.dim(batched ? 1 : 0);
  g.positions = features.dim(batched ? 2 : 1) * features.dim(batched ? 3 : 2);
  return g;
}

void LossConfig::validate() const {
  if (layers.empty()) throw ConfigError("loss config: at least one tap layer is required");
  if (!weights.empty() && weights.size() != layers.size()) {
    throw ConfigError("loss config: " + std::to_string(weights.size()) + " weights for " +
                      std::to_string(layers.size()) + " layers");
  }
  for (double w : weights)
    if (!(w >= 0.0)) throw ConfigError("loss config: layer weights must be non-negative");
}

double LossConfig::weight(std::size_t layer_index) const {
  return weights.empty() ? 1.0 : weights.at(layer_index);
}

std::vector<GramMatrix> target_grams(const std::vector<Tensor>& taps, const LossConfig& config) {
  config.validate();
  if (taps.size() != config.layers.size()) {
    throw ContractError("texture loss: " + std::to_string(taps.size()) + " target taps for " +
                        std::to_string(config.layers.size()) + " configured layers");
  }
  std::vector<GramMatrix> out;
  out.reserve(taps.size());
  for (std::size_t l = 0; l < taps.size(); ++l) out.push_back(gram(taps[l], config.layers[l]));
  return out;
}

Tensor texture_loss(const std::vector<Tensor>& taps_est, const std::vector<GramMatrix>& targets,
                    const LossConfig& config) {
  config.validate();
  if (taps_est.size() != config.layers.size() || targets.size() != config.layers.size()) {
    throw ContractError("texture loss: tap lists (" + std::to_string(taps_est.size()) + " estimated, " +
                        std::to_string(targets.size()) + " target) do not align with " +
                        std::to_string(config.layers.size()) + " configured layers");
  }
  Tensor total;
  for (std::size_t l = 0; l < taps_est.size(); ++l) {
    if (!targets[l].layer.empty() && targets[l].layer != config.layers[l]) {
      throw ContractError("texture loss: target layer " + targets[l].layer + " where " + config.layers[l] +
                          " was expected");
    }
    const GramMatrix est = gram(taps_est[l], config.layers[l]);
    if (est.matrix.shape() != targets[l].matrix.shape() || est.positions != targets[l].positions) {
      throw ContractError("texture loss: layer " + config.layers[l] + " Gram " + shape_string(est.matrix.shape()) +
                          " over " + std::to_string(est.positions) + " positions vs target " +
                          shape_string(targets[l].matrix.shape()) + " over " +
                          std::to_string(targets[l].positions));
    }
    const double n = static_cast<double>(est.channels);
    const double m = static_cast<double>(est.positions);
    const double coeff = config.weight(l) / (4.0 * n * n * m * m);
    const Tensor diff = sub(est.matrix, targets[l].matrix);
    const Tensor term = scale(sum(mul(diff, diff)), coeff);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor texture_loss(const std::vector<Tensor>& taps_est, const std::vector<Tensor>& taps_target,
                    const LossConfig& config) {
  if (taps_est.size() != taps_target.size()) {
    throw ContractError("texture loss: " + std::to_string(taps_est.size()) + " estimated taps vs " +
                        std::to_string(taps_target.size()) + " target taps");
  }
  for (std::size_t l = 0; l < taps_est.size(); ++l) {
    if (taps_est[l].shape() != taps_target[l].shape()) {
      throw ContractError("texture loss: tap " + std::to_string(l) + " shape " + shape_string(taps_est[l].shape()) +
                          " vs " + shape_string(taps_target[l].shape()));
    }
  }
  return texture_loss(taps_est, target_grams(taps_target, config), config);
}

void MaskSet::validate_partition() const {
  if (masks.size() != labels.size() || masks.size() != replica.size()) {
    throw ValidationError("mask set: masks, labels and replica flags differ in length");
  }
  if (masks.empty()) throw ValidationError("mask set: no masks");
  const std::size_t n = height * width;
  std::vector<int> cover(n, 0);
  for (std::size_t k = 0; k < masks.size(); ++k) {
    if (masks[k].size() != n) throw ValidationError("mask set: mask " + std::to_string(k) + " has the wrong size");
    for (std::size_t i = 0; i < n; ++i) {
      if (masks[k][i] > 1) throw ValidationError("mask set: mask " + std::to_string(k) + " is not binary");
      if (!replica[k]) cover[i] += masks[k][i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (cover[i] != 1) {
      throw ValidationError("mask set: pixel " + std::to_string(i) + " is covered " + std::to_string(cover[i]) +
                            " times by distinct masks");
    }
  }
}

Tensor MaskSet::to_tensor(DType dtype, bool include_replicas) const {
  std::vector<double> values;
  std::size_t count = 0;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    if (replica[k] && !include_replicas) continue;
    values.insert(values.end(), masks[k].begin(), masks[k].end());
    ++count;
  }
  return Tensor::from_values({1, count, height, width}, values, dtype);
}

MaskSet MaskSet::single(std::size_t height, std::size_t width) {
  MaskSet m;
  m.height = height;
  m.width = width;
  m.masks.emplace_back(height * width, std::uint8_t{1});
  m.labels.push_back(kOthers);
  m.replica.push_back(false);
  return m;
}

namespace {

void check_mask_extent(const Tensor& image, const MaskSet& masks) {
  if (image.ndim() != 4) throw DimensionError("masks: image must be [B,C,H,W], got " + shape_string(image.shape()));
  if (image.dim(2) != masks.height) {
    throw DimensionError("masks: axis 2 (height) is " + std::to_string(image.dim(2)) + ", masks are " +
                         std::to_string(masks.height));
  }
  if (image.dim(3) != masks.width) {
    throw DimensionError("masks: axis 3 (width) is " + std::to_string(image.dim(3)) + ", masks are " +
                         std::to_string(masks.width));
  }
}

}  // namespace

std::vector<Tensor> apply_masks(const Tensor& image, const MaskSet& masks) {
  check_mask_extent(image, masks);
  if (image.dim(0) != 1) throw DimensionError("apply_masks: axis 0 (batch) must be 1");
  std::vector<Tensor> out;
  for (const auto& m : masks.masks) {
    std::vector<double> v(m.begin(), m.end());
    const Tensor mask = Tensor::from_values({1, 1, masks.height, masks.width}, v, image.dtype());
    out.push_back(mask_multiply(image, mask));
  }
  return out;
}

Tensor semantic_texture_loss(const Tensor& est_image, const Tensor& target_image, const Tensor& masks,
                             const FeatureExtractor& extractor, const LossConfig& config) {
  if (est_image.shape() != target_image.shape()) {
    throw DimensionError("semantic texture loss: estimate " + shape_string(est_image.shape()) + " vs target " +
                         shape_string(target_image.shape()));
  }
  const Tensor est_masked = mask_multiply(est_image, masks);
  const Tensor target_masked = mask_multiply(target_image, masks);
  const auto taps_est = extractor.forward_with_taps(est_masked, config.layers);
  std::vector<Tensor> taps_target;
  {
    NoGradGuard no_grad;
    taps_target = extractor.forward_with_taps(target_masked, config.layers);
  }
  return texture_loss(taps_est, taps_target, config);
}

Tensor semantic_texture_loss(const Tensor& est_image, const Tensor& target_image, const MaskSet& masks,
                             const FeatureExtractor& extractor, const LossConfig& config, SemanticOptions options) {
  check_mask_extent(est_image, masks);
  masks.validate_partition();
  if (est_image.dim(0) != 1) throw DimensionError("semantic texture loss: axis 0 (batch) must be 1");
  return semantic_texture_loss(est_image, target_image, masks.to_tensor(est_image.dtype(), options.include_replicas),
                               extractor, config);
}

}  // namespace gramtex
