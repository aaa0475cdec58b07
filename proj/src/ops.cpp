#include "gramtex/ops.hpp"

#include <memory>
#include <vector>

#include "gramtex/kernels.hpp"

namespace gramtex {

using detail::grad_of;
using detail::make_result;
using detail::make_storage;
using detail::Node;
using detail::span_of;

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.ndim() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                         ", got shape " + shape_string(t.shape()));
  }
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw ContractError(std::string(op) + ": dtype mismatch (" + std::string(dtype_name(a.dtype())) + " vs " +
                        std::string(dtype_name(b.dtype())) + ")");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_same_dtype(a, b, op);
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != sb.size()) {
    throw DimensionError(std::string(op) + ": rank mismatch " + shape_string(sa) + " vs " + shape_string(sb));
  }
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i] != sb[i]) {
      throw DimensionError(std::string(op) + ": extent mismatch on axis " + std::to_string(i) + " (" +
                           shape_string(sa) + " vs " + shape_string(sb) + ")");
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  require_same_dtype(input, weight, "conv2d");
  if (stride == 0) throw GeometryError("conv2d: stride must be positive");

  kernels::ConvGeometry g;
  g.batch = input.dim(0);
  g.in_channels = input.dim(1);
  g.in_h = input.dim(2);
  g.in_w = input.dim(3);
  g.out_channels = weight.dim(0);
  g.kernel_h = weight.dim(2);
  g.kernel_w = weight.dim(3);
  g.stride = stride;
  g.pad = pad;

  if (weight.dim(1) != g.in_channels) {
    throw DimensionError("conv2d: axis 1 (input channels) mismatch: input has " + std::to_string(g.in_channels) +
                         ", weight expects " + std::to_string(weight.dim(1)));
  }
  if (bias.defined()) {
    require_same_dtype(input, bias, "conv2d");
    if (bias.ndim() != 1 || bias.dim(0) != g.out_channels) {
      throw DimensionError("conv2d: bias axis 0 (output channels) must be " + std::to_string(g.out_channels) +
                           ", got shape " + shape_string(bias.shape()));
    }
  }
  const std::size_t padded_h = g.in_h + 2 * pad;
  const std::size_t padded_w = g.in_w + 2 * pad;
  if (padded_h < g.kernel_h || padded_w < g.kernel_w) {
    throw GeometryError("conv2d: kernel " + std::to_string(g.kernel_h) + "x" + std::to_string(g.kernel_w) +
                        " exceeds padded input " + std::to_string(padded_h) + "x" + std::to_string(padded_w));
  }
  if ((padded_h - g.kernel_h) % stride != 0 || (padded_w - g.kernel_w) % stride != 0) {
    throw GeometryError("conv2d: stride " + std::to_string(stride) + " does not divide the padded extent exactly");
  }
  g.out_h = (padded_h - g.kernel_h) / stride + 1;
  g.out_w = (padded_w - g.kernel_w) / stride + 1;

  const DType dt = input.dtype();
  Storage out = make_storage(dt, g.batch * g.out_channels * g.out_h * g.out_w);
  dispatch(dt, [&]<class T>() {
    kernels::conv2d_forward<T>(g, input.data<T>(), weight.data<T>(),
                               bias.defined() ? bias.data<T>() : std::span<const T>{}, span_of<T>(out));
  });

  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return make_result({g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out), std::move(inputs), "conv2d",
                     [g, has_bias](Node& self) {
                       auto& x = *self.inputs[0];
                       auto& w = *self.inputs[1];
                       dispatch(self.dtype(), [&]<class T>() {
                         auto go = span_of<T>(*self.grad);
                         if (x.requires_grad) {
                           kernels::conv2d_backward_input<T>(g, go, span_of<T>(w.value), grad_of<T>(x));
                         }
                         Node* b = has_bias ? self.inputs[2].get() : nullptr;
                         const bool want_b = b && b->requires_grad;
                         if (w.requires_grad) {
                           kernels::conv2d_backward_weight<T>(g, go, span_of<T>(x.value), grad_of<T>(w),
                                                              want_b ? grad_of<T>(*b) : std::span<T>{});
                         } else if (want_b) {
                           auto gb = grad_of<T>(*b);
                           const std::size_t plane = g.out_h * g.out_w;
                           for (std::size_t n = 0; n < g.batch; ++n)
                             for (std::size_t c = 0; c < g.out_channels; ++c) {
                               T acc = 0;
                               for (std::size_t i = 0; i < plane; ++i) acc += go[(n * g.out_channels + c) * plane + i];
                               gb[c] += acc;
                             }
                         }
                       });
                     });
}

Tensor relu(const Tensor& x) {
  const DType dt = x.dtype();
  Storage out = make_storage(dt, x.numel());
  dispatch(dt, [&]<class T>() {
    auto in = x.data<T>();
    auto o = span_of<T>(out);
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
  });
  return make_result(x.shape(), std::move(out), {x}, "relu", [](Node& self) {
    auto& in = *self.inputs[0];
    dispatch(self.dtype(), [&]<class T>() {
      auto g = span_of<T>(*self.grad);
      auto v = span_of<T>(in.value);
      auto gi = grad_of<T>(in);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (v[i] > T(0)) gi[i] += g[i];
    });
  });
}

Tensor max_pool2(const Tensor& x) {
  require_rank(x, 4, "max_pool2", "input");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw GeometryError("max_pool2: spatial extent " + std::to_string(H) + "x" + std::to_string(W) +
                        " is not even");
  }
  const std::size_t OH = H / 2, OW = W / 2;
  const DType dt = x.dtype();
  Storage out = make_storage(dt, B * C * OH * OW);
  // Flat input index of the winning element per output cell.
  auto argmax = std::make_shared<std::vector<std::size_t>>(B * C * OH * OW);
  dispatch(dt, [&]<class T>() {
    auto in = x.data<T>();
    auto o = span_of<T>(out);
    for (std::size_t p = 0; p < B * C; ++p)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          std::size_t best = (p * H + 2 * oh) * W + 2 * ow;
          const std::size_t cand[3] = {best + 1, best + W, best + W + 1};
          for (auto c : cand)
            if (in[c] > in[best]) best = c;
          const std::size_t oi = (p * OH + oh) * OW + ow;
          o[oi] = in[best];
          (*argmax)[oi] = best;
        }
  });
  return make_result({B, C, OH, OW}, std::move(out), {x}, "max_pool2", [argmax](Node& self) {
    auto& in = *self.inputs[0];
    dispatch(self.dtype(), [&]<class T>() {
      auto g = span_of<T>(*self.grad);
      auto gi = grad_of<T>(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[(*argmax)[i]] += g[i];
    });
  });
}

namespace {

// Maps every flat index of the shuffled [B,C,H*r,W*r] layout to its source in [B,C*r*r,H,W].
template <class Fn>
void for_each_shuffle_pair(std::size_t B, std::size_t C, std::size_t H, std::size_t W, std::size_t r, Fn&& fn) {
  const std::size_t OH = H * r, OW = W * r;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          const std::size_t h = oh / r, dy = oh % r, w = ow / r, dx = ow % r;
          const std::size_t src_c = c * r * r + dy * r + dx;
          const std::size_t src = ((b * C * r * r + src_c) * H + h) * W + w;
          const std::size_t dst = ((b * C + c) * OH + oh) * OW + ow;
          fn(dst, src);
        }
}

}  // namespace

Tensor pixel_shuffle(const Tensor& x, std::size_t r) {
  require_rank(x, 4, "pixel_shuffle", "input");
  if (r == 0) throw GeometryError("pixel_shuffle: factor must be positive");
  const std::size_t B = x.dim(0), Cr = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (Cr % (r * r) != 0) {
    throw GeometryError("pixel_shuffle: " + std::to_string(Cr) + " channels not divisible by r^2 = " +
                        std::to_string(r * r));
  }
  const std::size_t C = Cr / (r * r);
  Storage out = make_storage(x.dtype(), x.numel());
  dispatch(x.dtype(), [&]<class T>() {
    auto in = x.data<T>();
    auto o = span_of<T>(out);
    for_each_shuffle_pair(B, C, H, W, r, [&](std::size_t dst, std::size_t src) { o[dst] = in[src]; });
  });
  return make_result({B, C, H * r, W * r}, std::move(out), {x}, "pixel_shuffle", [=](Node& self) {
    auto& in = *self.inputs[0];
    dispatch(self.dtype(), [&]<class T>() {
      auto g = span_of<T>(*self.grad);
      auto gi = grad_of<T>(in);
      for_each_shuffle_pair(B, C, H, W, r, [&](std::size_t dst, std::size_t src) { gi[src] += g[dst]; });
    });
  });
}

Tensor pixel_unshuffle(const Tensor& x, std::size_t r) {
  require_rank(x, 4, "pixel_unshuffle", "input");
  if (r == 0) throw GeometryError("pixel_unshuffle: factor must be positive");
  const std::size_t B = x.dim(0), C = x.dim(1), OH = x.dim(2), OW = x.dim(3);
  if (OH % r != 0 || OW % r != 0) {
    throw GeometryError("pixel_unshuffle: spatial extent not divisible by " + std::to_string(r));
  }
  const std::size_t H = OH / r, W = OW / r;
  Storage out = make_storage(x.dtype(), x.numel());
  dispatch(x.dtype(), [&]<class T>() {
    auto in = x.data<T>();
    auto o = span_of<T>(out);
    for_each_shuffle_pair(B, C, H, W, r, [&](std::size_t dst, std::size_t src) { o[src] = in[dst]; });
  });
  return make_result({B, C * r * r, H, W}, std::move(out), {x}, "pixel_unshuffle", [=](Node& self) {
    auto& in = *self.inputs[0];
    dispatch(self.dtype(), [&]<class T>() {
      auto g = span_of<T>(*self.grad);
      auto gi = grad_of<T>(in);
      for_each_shuffle_pair(B, C, H, W, r, [&](std::size_t dst, std::size_t src) { gi[dst] += g[src]; });
    });
  });
}

namespace {

enum class Binary { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, Binary kind, const char* name) {
  require_same_shape(a, b, name);
  Storage out = make_storage(a.dtype(), a.numel());
  dispatch(a.dtype(), [&]<class T>() {
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto o = span_of<T>(out);
    for (std::size_t i = 0; i < o.size(); ++i) {
      switch (kind) {
        case Binary::add: o[i] = x[i] + y[i]; break;
        case Binary::sub: o[i] = x[i] - y[i]; break;
        case Binary::mul: o[i] = x[i] * y[i]; break;
      }
    }
  });
  return make_result(a.shape(), std::move(out), {a, b}, name, [kind](Node& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    dispatch(self.dtype(), [&]<class T>() {
      auto g = span_of<T>(*self.grad);
      if (x.requires_grad) {
        auto gx = grad_of<T>(x);
        auto yv = span_of<T>(y.value);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += kind == Binary::mul ? g[i] * yv[i] : g[i];
      }
      if (y.requires_grad) {
        auto gy = grad_of<T>(y);
        auto xv = span_of<T>(x.value);
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (kind) {
            case Binary::add: gy[i] += g[i]; break;
            case Binary::sub: gy[i] -= g[i]; break;
            case Binary::mul: gy[i] += g[i] * xv[i]; break;
          }
        }
      }
    });
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::mul, "mul"); }

Tensor scale(const Tensor& a, double factor) {
  Storage out = make_storage(a.dtype(), a.numel());
  dispatch(a.dtype(), [&]<class T>() {
    auto x = a.data<T>();
    auto o = span_of<T>(out);
    const T f = static_cast<T>(factor);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * f;
  });
  return make_result(a.shape(), std::move(out), {a}, "scale", [factor](Node& self) {
    auto& x = *self.inputs[0];
    dispatch(self.dtype(), [&]<class T>() {
      auto g = span_of<T>(*self.grad);
      auto gx = grad_of<T>(x);
      const T f = static_cast<T>(factor);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * f;
    });
  });
}

Tensor sum(const Tensor& x) {
  Storage out = make_storage(x.dtype(), 1);
  dispatch(x.dtype(), [&]<class T>() { span_of<T>(out)[0] = kernels::sum<T>(x.data<T>()); });
  return make_result({}, std::move(out), {x}, "sum", [](Node& self) {
    auto& in = *self.inputs[0];
    dispatch(self.dtype(), [&]<class T>() {
      const T g = span_of<T>(*self.grad)[0];
      auto gi = grad_of<T>(in);
      for (auto& v : gi) v += g;
    });
  });
}

Tensor mean(const Tensor& x) {
  const std::size_t n = x.numel();
  if (n == 0) throw ContractError("mean of an empty tensor");
  Storage out = make_storage(x.dtype(), 1);
  dispatch(x.dtype(), [&]<class T>() { span_of<T>(out)[0] = kernels::sum<T>(x.data<T>()) / static_cast<T>(n); });
  return make_result({}, std::move(out), {x}, "mean", [n](Node& self) {
    auto& in = *self.inputs[0];
    dispatch(self.dtype(), [&]<class T>() {
      const T g = span_of<T>(*self.grad)[0] / static_cast<T>(n);
      auto gi = grad_of<T>(in);
      for (auto& v : gi) v += g;
    });
  });
}

Tensor gram_matrix(const Tensor& features) {
  std::size_t B = 1, C = 0, M = 0;
  if (features.ndim() == 3) {
    C = features.dim(0);
    M = features.dim(1) * features.dim(2);
  } else if (features.ndim() == 4) {
    B = features.dim(0);
    C = features.dim(1);
    M = features.dim(2) * features.dim(3);
  } else {
    throw DimensionError("gram_matrix: features must be [C,H,W] or [B,C,H,W], got " +
                         shape_string(features.shape()));
  }
  if (M == 0) throw GeometryError("gram_matrix: empty spatial extent");
  if (C == 0) throw GeometryError("gram_matrix: no channels");
  Storage out = make_storage(features.dtype(), B * C * C);
  dispatch(features.dtype(), [&]<class T>() {
    kernels::gram_forward<T>(B, C, M, features.data<T>(), span_of<T>(out));
  });
  return make_result({B, C, C}, std::move(out), {features}, "gram", [B, C, M](Node& self) {
    auto& f = *self.inputs[0];
    dispatch(self.dtype(), [&]<class T>() {
      kernels::gram_backward<T>(B, C, M, span_of<T>(*self.grad), span_of<T>(f.value), grad_of<T>(f));
    });
  });
}

Tensor normalize_channels(const Tensor& x, std::span<const double> channel_mean,
                          std::span<const double> channel_std) {
  require_rank(x, 4, "normalize_channels", "input");
  const std::size_t B = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  if (channel_mean.size() != C || channel_std.size() != C) {
    throw DimensionError("normalize_channels: axis 1 (channels) is " + std::to_string(C) + " but mean/std have " +
                         std::to_string(channel_mean.size()) + "/" + std::to_string(channel_std.size()) +
                         " entries");
  }
  std::vector<double> sd(channel_std.begin(), channel_std.end());
  Storage out = make_storage(x.dtype(), x.numel());
  dispatch(x.dtype(), [&]<class T>() {
    auto in = x.data<T>();
    auto o = span_of<T>(out);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) {
        const T m = static_cast<T>(channel_mean[c]);
        const T s = static_cast<T>(channel_std[c]);
        const std::size_t base = (b * C + c) * P;
        for (std::size_t i = 0; i < P; ++i) o[base + i] = (in[base + i] - m) / s;
      }
  });
  return make_result(x.shape(), std::move(out), {x}, "normalize_channels", [B, C, P, sd](Node& self) {
    auto& in = *self.inputs[0];
    dispatch(self.dtype(), [&]<class T>() {
      auto g = span_of<T>(*self.grad);
      auto gi = grad_of<T>(in);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
          const T s = static_cast<T>(sd[c]);
          const std::size_t base = (b * C + c) * P;
          for (std::size_t i = 0; i < P; ++i) gi[base + i] += g[base + i] / s;
        }
    });
  });
}

Tensor mask_multiply(const Tensor& x, const Tensor& masks) {
  require_rank(x, 4, "mask_multiply", "image");
  require_rank(masks, 4, "mask_multiply", "masks");
  require_same_dtype(x, masks, "mask_multiply");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (masks.dim(0) != B) {
    throw DimensionError("mask_multiply: axis 0 (batch) mismatch: image " + std::to_string(B) + ", masks " +
                         std::to_string(masks.dim(0)));
  }
  if (masks.dim(2) != H) {
    throw DimensionError("mask_multiply: axis 2 (height) mismatch: image " + std::to_string(H) + ", masks " +
                         std::to_string(masks.dim(2)));
  }
  if (masks.dim(3) != W) {
    throw DimensionError("mask_multiply: axis 3 (width) mismatch: image " + std::to_string(W) + ", masks " +
                         std::to_string(masks.dim(3)));
  }
  const std::size_t R = masks.dim(1), P = H * W;
  Storage out = make_storage(x.dtype(), B * R * C * P);
  dispatch(x.dtype(), [&]<class T>() {
    auto in = x.data<T>();
    auto m = masks.data<T>();
    auto o = span_of<T>(out);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
          const T* src = in.data() + (b * C + c) * P;
          const T* mk = m.data() + (b * R + r) * P;
          T* dst = o.data() + ((b * R + r) * C + c) * P;
          for (std::size_t i = 0; i < P; ++i) dst[i] = src[i] * mk[i];
        }
  });
  return make_result({B * R, C, H, W}, std::move(out), {x, masks}, "mask_multiply", [B, C, R, P](Node& self) {
    auto& in = *self.inputs[0];
    auto& mk = *self.inputs[1];
    if (!in.requires_grad) return;
    dispatch(self.dtype(), [&]<class T>() {
      auto g = span_of<T>(*self.grad);
      auto m = span_of<T>(mk.value);
      auto gi = grad_of<T>(in);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c) {
            const T* src = g.data() + ((b * R + r) * C + c) * P;
            const T* mm = m.data() + (b * R + r) * P;
            T* dst = gi.data() + (b * C + c) * P;
            for (std::size_t i = 0; i < P; ++i) dst[i] += src[i] * mm[i];
          }
    });
  });
}

Tensor mse_loss(const Tensor& est, const Tensor& target) {
  require_same_shape(est, target, "mse_loss");
  const std::size_t n = est.numel();
  if (n == 0) throw ContractError("mse_loss of empty tensors");
  Storage out = make_storage(est.dtype(), 1);
  dispatch(est.dtype(), [&]<class T>() {
    auto e = est.data<T>();
    auto t = target.data<T>();
    std::vector<T> sq(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = e[i] - t[i];
      sq[i] = d * d;
    }
    span_of<T>(out)[0] = kernels::sum<T>(sq) / static_cast<T>(n);
  });
  return make_result({}, std::move(out), {est, target}, "mse_loss", [n](Node& self) {
    auto& e = *self.inputs[0];
    auto& t = *self.inputs[1];
    dispatch(self.dtype(), [&]<class T>() {
      const T g = span_of<T>(*self.grad)[0] * T(2) / static_cast<T>(n);
      auto ev = span_of<T>(e.value);
      auto tv = span_of<T>(t.value);
      if (e.requires_grad) {
        auto ge = grad_of<T>(e);
        for (std::size_t i = 0; i < n; ++i) ge[i] += g * (ev[i] - tv[i]);
      }
      if (t.requires_grad) {
        auto gt = grad_of<T>(t);
        for (std::size_t i = 0; i < n; ++i) gt[i] -= g * (ev[i] - tv[i]);
      }
    });
  });
}

}  // namespace gramtex
