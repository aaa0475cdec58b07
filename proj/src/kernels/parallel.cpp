#include <omp.h>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "gramtex/kernels.hpp"

namespace gramtex::kernels {

namespace {

using index_t = std::int64_t;

// Output columns [lo, hi) whose input column ow*stride + offset lands inside [0, extent).
inline void valid_range(index_t offset, index_t stride, index_t extent, index_t out_extent, index_t& lo,
                        index_t& hi) {
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  index_t last = extent - 1 - offset;
  hi = last < 0 ? 0 : std::min(out_extent, last / stride + 1);
  if (hi < lo) hi = lo;
}

}  // namespace

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const index_t B = g.batch, Ci = g.in_channels, Co = g.out_channels;
  const index_t H = g.in_h, W = g.in_w, OH = g.out_h, OW = g.out_w;
  const index_t KH = g.kernel_h, KW = g.kernel_w, S = g.stride, P = g.pad;
  const T* in = input.data();
  const T* wt = weight.data();
  T* out = output.data();
  const bool has_bias = !bias.empty();

#pragma omp parallel for collapse(2) schedule(static)
  for (index_t b = 0; b < B; ++b) {
    for (index_t co = 0; co < Co; ++co) {
      T* plane = out + (b * Co + co) * OH * OW;
      std::fill(plane, plane + OH * OW, has_bias ? bias[co] : T(0));
      for (index_t ci = 0; ci < Ci; ++ci) {
        const T* src = in + (b * Ci + ci) * H * W;
        const T* k = wt + ((co * Ci + ci) * KH) * KW;
        for (index_t kh = 0; kh < KH; ++kh) {
          index_t oh_lo, oh_hi;
          valid_range(kh - P, S, H, OH, oh_lo, oh_hi);
          for (index_t kw = 0; kw < KW; ++kw) {
            const T w = k[kh * KW + kw];
            index_t ow_lo, ow_hi;
            valid_range(kw - P, S, W, OW, ow_lo, ow_hi);
            for (index_t oh = oh_lo; oh < oh_hi; ++oh) {
              const T* row = src + (oh * S + kh - P) * W;
              const index_t off = kw - P;
              T* dst = plane + oh * OW;
              if (S == 1) {
                for (index_t ow = ow_lo; ow < ow_hi; ++ow) dst[ow] += w * row[ow + off];
              } else {
                for (index_t ow = ow_lo; ow < ow_hi; ++ow) dst[ow] += w * row[ow * S + off];
              }
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input) {
  const index_t B = g.batch, Ci = g.in_channels, Co = g.out_channels;
  const index_t H = g.in_h, W = g.in_w, OH = g.out_h, OW = g.out_w;
  const index_t KH = g.kernel_h, KW = g.kernel_w, S = g.stride, P = g.pad;
  const T* go = grad_output.data();
  const T* wt = weight.data();
  T* gi = grad_input.data();

#pragma omp parallel for collapse(2) schedule(static)
  for (index_t b = 0; b < B; ++b) {
    for (index_t ci = 0; ci < Ci; ++ci) {
      T* dst_plane = gi + (b * Ci + ci) * H * W;
      for (index_t co = 0; co < Co; ++co) {
        const T* src = go + (b * Co + co) * OH * OW;
        const T* k = wt + ((co * Ci + ci) * KH) * KW;
        for (index_t kh = 0; kh < KH; ++kh) {
          index_t oh_lo, oh_hi;
          valid_range(kh - P, S, H, OH, oh_lo, oh_hi);
          for (index_t kw = 0; kw < KW; ++kw) {
            const T w = k[kh * KW + kw];
            index_t ow_lo, ow_hi;
            valid_range(kw - P, S, W, OW, ow_lo, ow_hi);
            for (index_t oh = oh_lo; oh < oh_hi; ++oh) {
              T* row = dst_plane + (oh * S + kh - P) * W;
              const index_t off = kw - P;
              const T* gsrc = src + oh * OW;
              if (S == 1) {
                for (index_t ow = ow_lo; ow < ow_hi; ++ow) row[ow + off] += w * gsrc[ow];
              } else {
                for (index_t ow = ow_lo; ow < ow_hi; ++ow) row[ow * S + off] += w * gsrc[ow];
              }
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> grad_output,
                            std::span<const T> input, std::span<T> grad_weight, std::span<T> grad_bias) {
  const index_t B = g.batch, Ci = g.in_channels, Co = g.out_channels;
  const index_t H = g.in_h, W = g.in_w, OH = g.out_h, OW = g.out_w;
  const index_t KH = g.kernel_h, KW = g.kernel_w, S = g.stride, P = g.pad;
  const T* go = grad_output.data();
  const T* in = input.data();
  T* gw = grad_weight.data();

#pragma omp parallel for collapse(2) schedule(static)
  for (index_t co = 0; co < Co; ++co) {
    for (index_t ci = 0; ci < Ci; ++ci) {
      for (index_t kh = 0; kh < KH; ++kh) {
        index_t oh_lo, oh_hi;
        valid_range(kh - P, S, H, OH, oh_lo, oh_hi);
        for (index_t kw = 0; kw < KW; ++kw) {
          index_t ow_lo, ow_hi;
          valid_range(kw - P, S, W, OW, ow_lo, ow_hi);
          T acc = 0;
          for (index_t b = 0; b < B; ++b) {
            const T* gsrc = go + (b * Co + co) * OH * OW;
            const T* src = in + (b * Ci + ci) * H * W;
            for (index_t oh = oh_lo; oh < oh_hi; ++oh) {
              const T* row = src + (oh * S + kh - P) * W;
              const T* grow = gsrc + oh * OW;
              for (index_t ow = ow_lo; ow < ow_hi; ++ow) acc += grow[ow] * row[ow * S + kw - P];
            }
          }
          gw[((co * Ci + ci) * KH + kh) * KW + kw] += acc;
        }
      }
    }
  }

  if (!grad_bias.empty()) {
#pragma omp parallel for schedule(static)
    for (index_t co = 0; co < Co; ++co) {
      T acc = 0;
      for (index_t b = 0; b < B; ++b) {
        const T* gsrc = go + (b * Co + co) * OH * OW;
        for (index_t i = 0; i < OH * OW; ++i) acc += gsrc[i];
      }
      grad_bias[co] += acc;
    }
  }
}

template <class T>
void gram_forward(std::size_t batch, std::size_t channels, std::size_t positions,
                  std::span<const T> features, std::span<T> gram) {
  const index_t B = batch, C = channels, M = positions;
  const T* f = features.data();
  T* out = gram.data();

#pragma omp parallel for collapse(2) schedule(dynamic)
  for (index_t b = 0; b < B; ++b) {
    for (index_t i = 0; i < C; ++i) {
      const T* fi = f + (b * C + i) * M;
      T* gb = out + b * C * C;
      for (index_t j = i; j < C; ++j) {
        const T* fj = f + (b * C + j) * M;
        T acc = 0;
        for (index_t m = 0; m < M; ++m) acc += fi[m] * fj[m];
        gb[i * C + j] = acc;
        gb[j * C + i] = acc;
      }
    }
  }
}

template <class T>
void gram_backward(std::size_t batch, std::size_t channels, std::size_t positions,
                   std::span<const T> grad_gram, std::span<const T> features, std::span<T> grad_features) {
  const index_t B = batch, C = channels, M = positions;
  const T* f = features.data();
  const T* gg = grad_gram.data();
  T* gf = grad_features.data();

#pragma omp parallel for collapse(2) schedule(static)
  for (index_t b = 0; b < B; ++b) {
    for (index_t i = 0; i < C; ++i) {
      const T* gb = gg + b * C * C;
      T* dst = gf + (b * C + i) * M;
      for (index_t j = 0; j < C; ++j) {
        const T coeff = gb[i * C + j] + gb[j * C + i];
        if (coeff == T(0)) continue;
        const T* fj = f + (b * C + j) * M;
        for (index_t m = 0; m < M; ++m) dst[m] += coeff * fj[m];
      }
    }
  }
}

template <class T>
T sum(std::span<const T> values) {
  const index_t n = values.size();
  const index_t chunk = kSumChunk;
  const index_t chunks = (n + chunk - 1) / chunk;
  if (chunks <= 1) {
    T acc = 0;
    for (auto v : values) acc += v;
    return acc;
  }
  std::vector<T> partial(chunks);
#pragma omp parallel for schedule(static)
  for (index_t c = 0; c < chunks; ++c) {
    T acc = 0;
    const index_t end = std::min(n, (c + 1) * chunk);
    for (index_t i = c * chunk; i < end; ++i) acc += values[i];
    partial[c] = acc;
  }
  T total = 0;
  for (auto p : partial) total += p;
  return total;
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

}  // namespace gramtex::kernels
