#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gramtex/extractor.hpp"
#include "gramtex/tensor.hpp"

namespace gramtex {

struct GramMatrix {
  std::string layer;
  Tensor matrix;              // [B, N, N]
  std::size_t channels = 0;   // N_l
  std::size_t positions = 0;  // M_l = height * width of the source map
};

// Gram matrix of one tapped feature map ([C,H,W] or [B,C,H,W]).
GramMatrix gram(const Tensor& features, std::string layer = {});

struct LossConfig {
  TapSet layers = default_texture_taps();
  // Empty means weight 1 for every layer.
  std::vector<double> weights;

  void validate() const;
  double weight(std::size_t layer_index) const;
};

// Sum over layers of w_l / (4 N_l^2 M_l^2) * sum over all N_l x N_l entries of (G - A)^2,
// also summed over the batch axis. Tap lists are aligned with config.layers.
Tensor texture_loss(const std::vector<Tensor>& taps_est, const std::vector<Tensor>& taps_target,
                    const LossConfig& config);

// Same loss against precomputed target Gram matrices (e.g. a constant style image).
Tensor texture_loss(const std::vector<Tensor>& taps_est, const std::vector<GramMatrix>& target_grams,
                    const LossConfig& config);

std::vector<GramMatrix> target_grams(const std::vector<Tensor>& taps, const LossConfig& config);

// r binary masks partitioning an H x W frame. Replicas are padding copies of
// the "others" mask that carry no pixels outside the named classes.
struct MaskSet {
  static constexpr int kOthers = -1;

  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::vector<std::uint8_t>> masks;  // each height*width, values 0/1
  std::vector<int> labels;                       // class id, or kOthers
  std::vector<bool> replica;

  std::size_t size() const { return masks.size(); }
  // Throws ValidationError unless the non-replica masks are binary, disjoint and cover the frame.
  void validate_partition() const;
  // [1, R, H, W] tensor; replicas are dropped when include_replicas is false.
  Tensor to_tensor(DType dtype, bool include_replicas = true) const;

  static MaskSet single(std::size_t height, std::size_t width);
};

// One masked copy of a [1,3,H,W] image per mask, in mask order.
std::vector<Tensor> apply_masks(const Tensor& image, const MaskSet& masks);

struct SemanticOptions {
  bool include_replicas = true;
};

// Sum over masks k of texture_loss(taps(est * mask_k), taps(target * mask_k)).
Tensor semantic_texture_loss(const Tensor& est_image, const Tensor& target_image, const MaskSet& masks,
                             const FeatureExtractor& extractor, const LossConfig& config,
                             SemanticOptions options = {});

// Batched form: est/target [B,3,H,W] with masks [B,R,H,W] as a tensor.
Tensor semantic_texture_loss(const Tensor& est_image, const Tensor& target_image, const Tensor& masks,
                             const FeatureExtractor& extractor, const LossConfig& config);

}  // namespace gramtex
