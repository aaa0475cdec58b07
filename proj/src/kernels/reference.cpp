#include <cstdint>

#include "gramtex/kernels.hpp"

namespace gramtex::kernels::reference {

namespace {

using index_t = std::int64_t;

struct Indexer {
  index_t d1, d2, d3;
  index_t operator()(index_t a, index_t b, index_t c, index_t d) const {
    return ((a * d1 + b) * d2 + c) * d3 + d;
  }
};

}  // namespace

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const Indexer in_at{index_t(g.in_channels), index_t(g.in_h), index_t(g.in_w)};
  const Indexer w_at{index_t(g.in_channels), index_t(g.kernel_h), index_t(g.kernel_w)};
  const Indexer out_at{index_t(g.out_channels), index_t(g.out_h), index_t(g.out_w)};
  for (index_t b = 0; b < index_t(g.batch); ++b)
    for (index_t co = 0; co < index_t(g.out_channels); ++co)
      for (index_t oh = 0; oh < index_t(g.out_h); ++oh)
        for (index_t ow = 0; ow < index_t(g.out_w); ++ow) {
          T acc = bias.empty() ? T(0) : bias[co];
          for (index_t ci = 0; ci < index_t(g.in_channels); ++ci)
            for (index_t kh = 0; kh < index_t(g.kernel_h); ++kh)
              for (index_t kw = 0; kw < index_t(g.kernel_w); ++kw) {
                const index_t ih = oh * index_t(g.stride) + kh - index_t(g.pad);
                const index_t iw = ow * index_t(g.stride) + kw - index_t(g.pad);
                if (ih < 0 || iw < 0 || ih >= index_t(g.in_h) || iw >= index_t(g.in_w)) continue;
                acc += weight[w_at(co, ci, kh, kw)] * input[in_at(b, ci, ih, iw)];
              }
          output[out_at(b, co, oh, ow)] = acc;
        }
}

template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input) {
  const Indexer in_at{index_t(g.in_channels), index_t(g.in_h), index_t(g.in_w)};
  const Indexer w_at{index_t(g.in_channels), index_t(g.kernel_h), index_t(g.kernel_w)};
  const Indexer out_at{index_t(g.out_channels), index_t(g.out_h), index_t(g.out_w)};
  for (index_t b = 0; b < index_t(g.batch); ++b)
    for (index_t co = 0; co < index_t(g.out_channels); ++co)
      for (index_t oh = 0; oh < index_t(g.out_h); ++oh)
        for (index_t ow = 0; ow < index_t(g.out_w); ++ow) {
          const T go = grad_output[out_at(b, co, oh, ow)];
          for (index_t ci = 0; ci < index_t(g.in_channels); ++ci)
            for (index_t kh = 0; kh < index_t(g.kernel_h); ++kh)
              for (index_t kw = 0; kw < index_t(g.kernel_w); ++kw) {
                const index_t ih = oh * index_t(g.stride) + kh - index_t(g.pad);
                const index_t iw = ow * index_t(g.stride) + kw - index_t(g.pad);
                if (ih < 0 || iw < 0 || ih >= index_t(g.in_h) || iw >= index_t(g.in_w)) continue;
                grad_input[in_at(b, ci, ih, iw)] += weight[w_at(co, ci, kh, kw)] * go;
              }
        }
}

template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> grad_output,
                            std::span<const T> input, std::span<T> grad_weight, std::span<T> grad_bias) {
  const Indexer in_at{index_t(g.in_channels), index_t(g.in_h), index_t(g.in_w)};
  const Indexer w_at{index_t(g.in_channels), index_t(g.kernel_h), index_t(g.kernel_w)};
  const Indexer out_at{index_t(g.out_channels), index_t(g.out_h), index_t(g.out_w)};
  for (index_t b = 0; b < index_t(g.batch); ++b)
    for (index_t co = 0; co < index_t(g.out_channels); ++co)
      for (index_t oh = 0; oh < index_t(g.out_h); ++oh)
        for (index_t ow = 0; ow < index_t(g.out_w); ++ow) {
          const T go = grad_output[out_at(b, co, oh, ow)];
          if (!grad_bias.empty()) grad_bias[co] += go;
          for (index_t ci = 0; ci < index_t(g.in_channels); ++ci)
            for (index_t kh = 0; kh < index_t(g.kernel_h); ++kh)
              for (index_t kw = 0; kw < index_t(g.kernel_w); ++kw) {
                const index_t ih = oh * index_t(g.stride) + kh - index_t(g.pad);
                const index_t iw = ow * index_t(g.stride) + kw - index_t(g.pad);
                if (ih < 0 || iw < 0 || ih >= index_t(g.in_h) || iw >= index_t(g.in_w)) continue;
                grad_weight[w_at(co, ci, kh, kw)] += go * input[in_at(b, ci, ih, iw)];
              }
        }
}

template <class T>
void gram_forward(std::size_t batch, std::size_t channels, std::size_t positions,
                  std::span<const T> features, std::span<T> gram) {
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < channels; ++i)
      for (std::size_t j = 0; j < channels; ++j) {
        T acc = 0;
        for (std::size_t m = 0; m < positions; ++m)
          acc += features[(b * channels + i) * positions + m] * features[(b * channels + j) * positions + m];
        gram[(b * channels + i) * channels + j] = acc;
      }
}

template <class T>
void gram_backward(std::size_t batch, std::size_t channels, std::size_t positions,
                   std::span<const T> grad_gram, std::span<const T> features, std::span<T> grad_features) {
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < channels; ++i)
      for (std::size_t j = 0; j < channels; ++j) {
        const T gij = grad_gram[(b * channels + i) * channels + j];
        for (std::size_t m = 0; m < positions; ++m) {
          grad_features[(b * channels + i) * positions + m] += gij * features[(b * channels + j) * positions + m];
          grad_features[(b * channels + j) * positions + m] += gij * features[(b * channels + i) * positions + m];
        }
      }
}

template <class T>
T sum(std::span<const T> values) {
  T acc = 0;
  for (auto v : values) acc += v;
  return acc;
}

#define GRAMTEX_INSTANTIATE(T)                                                                            \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,             \
                                  std::span<const T>, std::span<T>);                                       \
  template void conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,      \
                                         std::span<T>);                                                    \
  template void conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,     \
                                          std::span<T>, std::span<T>);                                     \
  template void gram_forward<T>(std::size_t, std::size_t, std::size_t, std::span<const T>, std::span<T>);  \
  template void gram_backward<T>(std::size_t, std::size_t, std::size_t, std::span<const T>,                \
                                 std::span<const T>, std::span<T>);                                        \
  template T sum<T>(std::span<const T>);

GRAMTEX_INSTANTIATE(float)
GRAMTEX_INSTANTIATE(double)

#undef GRAMTEX_INSTANTIATE

}  // namespace gramtex::kernels::reference
