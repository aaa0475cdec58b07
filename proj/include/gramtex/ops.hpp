#pragma once

#include <cstddef>
#include <span>

#include "gramtex/tensor.hpp"

namespace gramtex {

// 2-D convolution over NCHW input with zero padding. `bias` may be undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride = 1,
              std::size_t pad = 0);

// max(x, 0). The backward pass routes gradient only where x > 0.
Tensor relu(const Tensor& x);

// 2x2 max pooling, stride 2. Ties send the gradient to the first element in
// row-major window order.
Tensor max_pool2(const Tensor& x);

// [B, C*r*r, H, W] -> [B, C, H*r, W*r] with
// out(b, c, h*r+dy, w*r+dx) = in(b, c*r*r + dy*r + dx, h, w).
Tensor pixel_shuffle(const Tensor& x, std::size_t r);
// Exact inverse of pixel_shuffle.
Tensor pixel_unshuffle(const Tensor& x, std::size_t r);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Batched Gram matrices: [B, C, H, W] (or [C, H, W]) -> [B, C, C].
Tensor gram_matrix(const Tensor& features);

// Per-channel (x - mean[c]) / std[c] on [B, C, H, W]; mean and std are constants.
Tensor normalize_channels(const Tensor& x, std::span<const double> channel_mean,
                          std::span<const double> channel_std);

// x: [B, C, H, W], masks: [B, R, H, W] constant.
// Result [B*R, C, H, W] with out(b*R + r, c) = x(b, c) * masks(b, r).
Tensor mask_multiply(const Tensor& x, const Tensor& masks);

Tensor mse_loss(const Tensor& est, const Tensor& target);

}  // namespace gramtex
