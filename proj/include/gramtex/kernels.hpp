#pragma once

#include <cstddef>
#include <span>

namespace gramtex::kernels {

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;
};

// All kernels take NCHW row-major buffers. Every output element is produced by
// exactly one thread with a fixed summation order, so results are independent
// of the thread count. Backward kernels accumulate into their outputs.

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output);
template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input);
template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> grad_output,
                            std::span<const T> input, std::span<T> grad_weight, std::span<T> grad_bias);

// G[b] = F[b] F[b]^T with F[b] a channels x positions matrix.
template <class T>
void gram_forward(std::size_t batch, std::size_t channels, std::size_t positions,
                  std::span<const T> features, std::span<T> gram);
template <class T>
void gram_backward(std::size_t batch, std::size_t channels, std::size_t positions,
                   std::span<const T> grad_gram, std::span<const T> features, std::span<T> grad_features);

// Sum in fixed-size chunks, combined left to right.
template <class T>
T sum(std::span<const T> values);

inline constexpr std::size_t kSumChunk = 4096;

namespace reference {

// Serial, loop-per-index formulations of the kernels above. Used by tests and
// the benchmark as the baseline the parallel versions must agree with.

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output);
template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input);
template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> grad_output,
                            std::span<const T> input, std::span<T> grad_weight, std::span<T> grad_bias);
template <class T>
void gram_forward(std::size_t batch, std::size_t channels, std::size_t positions,
                  std::span<const T> features, std::span<T> gram);
template <class T>
void gram_backward(std::size_t batch, std::size_t channels, std::size_t positions,
                   std::span<const T> grad_gram, std::span<const T> features, std::span<T> grad_features);
template <class T>
T sum(std::span<const T> values);

}  // namespace reference

}  // namespace gramtex::kernels
