#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gramtex/tensor.hpp"

namespace gramtex {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment buffers for a fixed list of parameters, in parameter order.
struct AdamState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  static AdamState for_parameters(std::span<const Tensor> params, AdamConfig config = {});
};

// One bias-corrected Adam update using each parameter's current gradient.
// Parameters without a gradient are treated as having a zero gradient.
void adam_step(std::span<Tensor> params, AdamState& state);

// Same update with explicitly supplied gradients (one per parameter, same shapes).
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace gramtex
