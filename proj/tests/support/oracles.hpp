#pragma once

// Independent brute-force formulations used as test oracles, plus small
// fixtures. The oracles never call into the library's kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gramtex/extractor.hpp"
#include "gramtex/ops.hpp"
#include "gramtex/random.hpp"
#include "gramtex/tensor.hpp"

namespace gramtex::testing {

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, DType dtype = DType::f64, double lo = -1.0,
                            double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_values(shape, v, dtype);
}

// Smooth seeded RGB image in [0, 1]: a few random low-frequency sinusoids per channel.
inline Tensor smooth_image(std::size_t h, std::size_t w, std::uint64_t seed, DType dtype = DType::f64) {
  Rng rng(seed);
  std::vector<double> v(3 * h * w);
  for (std::size_t c = 0; c < 3; ++c) {
    double fy[3], fx[3], ph[3], amp[3];
    for (int k = 0; k < 3; ++k) {
      fy[k] = rng.uniform(0.5, 3.0);
      fx[k] = rng.uniform(0.5, 3.0);
      ph[k] = rng.uniform(0.0, 6.283185307179586);
      amp[k] = rng.uniform(0.05, 0.15);
    }
    const double base = rng.uniform(0.3, 0.7);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double s = base;
        for (int k = 0; k < 3; ++k) {
          s += amp[k] * std::sin(6.283185307179586 * (fy[k] * y / double(h) + fx[k] * x / double(w)) + ph[k]);
        }
        v[(c * h + y) * w + x] = std::clamp(s, 0.0, 1.0);
      }
  }
  return Tensor::from_values({1, 3, h, w}, v, dtype);
}

// smooth_image plus seeded per-pixel grain of amplitude 0.2, clipped to [0, 1].
inline Tensor textured_image(std::size_t h, std::size_t w, std::uint64_t seed, DType dtype = DType::f64) {
  auto v = smooth_image(h, w, seed, DType::f64).to_vector();
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  for (auto& x : v) x = std::clamp(x + rng.uniform(-0.2, 0.2), 0.0, 1.0);
  return Tensor::from_values({1, 3, h, w}, v, dtype);
}

inline double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return scale == 0.0 ? worst : worst / scale;
}

inline double rel_diff(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

// Direct six-loop zero-padded convolution over NCHW.
inline std::vector<double> conv_oracle(const std::vector<double>& x, const Shape& xs, const std::vector<double>& w,
                                       const Shape& ws, const std::vector<double>& bias, std::size_t stride,
                                       std::size_t pad, Shape& out_shape) {
  const long B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const long O = ws[0], K = ws[2], L = ws[3];
  const long S = stride, P = pad;
  const long OH = (H + 2 * P - K) / S + 1, OW = (W + 2 * P - L) / S + 1;
  out_shape = {std::size_t(B), std::size_t(O), std::size_t(OH), std::size_t(OW)};
  std::vector<double> out(B * O * OH * OW, 0.0);
  for (long b = 0; b < B; ++b)
    for (long o = 0; o < O; ++o)
      for (long oy = 0; oy < OH; ++oy)
        for (long ox = 0; ox < OW; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (long c = 0; c < C; ++c)
            for (long ky = 0; ky < K; ++ky)
              for (long kx = 0; kx < L; ++kx) {
                const long iy = oy * S + ky - P, ix = ox * S + kx - P;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x[((b * C + c) * H + iy) * W + ix] * w[((o * C + c) * K + ky) * L + kx];
              }
          out[((b * O + o) * OH + oy) * OW + ox] = acc;
        }
  return out;
}

// Window scan for 2x2 / stride 2 max pooling.
inline std::vector<double> pool_oracle(const std::vector<double>& x, const Shape& s) {
  const std::size_t B = s[0], C = s[1], H = s[2], W = s[3];
  std::vector<double> out;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; y += 2)
        for (std::size_t xx = 0; xx < W; xx += 2) {
          std::vector<double> window;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) window.push_back(x[((b * C + c) * H + y + dy) * W + xx + dx]);
          out.push_back(*std::max_element(window.begin(), window.end()));
        }
  return out;
}

// G[b][i][j] = sum_k F[b][i][k] F[b][j][k], triple loop per batch item.
inline std::vector<double> gram_oracle(const std::vector<double>& f, std::size_t B, std::size_t C, std::size_t M) {
  std::vector<double> g(B * C * C, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t j = 0; j < C; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < M; ++k) acc += f[(b * C + i) * M + k] * f[(b * C + j) * M + k];
        g[(b * C + i) * C + j] = acc;
      }
  return g;
}

// Whole-formula texture loss: sum_l w_l / (4 N^2 M^2) sum_b sum_ij (G - A)^2.
inline double texture_loss_oracle(const std::vector<Tensor>& est, const std::vector<Tensor>& target,
                                  const std::vector<double>& weights = {}) {
  double total = 0.0;
  for (std::size_t l = 0; l < est.size(); ++l) {
    const auto& s = est[l].shape();
    const std::size_t B = s[0], N = s[1], M = s[2] * s[3];
    const auto g = gram_oracle(est[l].to_vector(), B, N, M);
    const auto a = gram_oracle(target[l].to_vector(), B, N, M);
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) acc += (g[i] - a[i]) * (g[i] - a[i]);
    const double w = weights.empty() ? 1.0 : weights[l];
    total += w * acc / (4.0 * double(N) * N * double(M) * M);
  }
  return total;
}

// Whole-formula Gram distance on [1,C,H,W] feature maps with unit-normalized channel vectors.
inline double gram_distance_oracle(const std::vector<Tensor>& fx, const std::vector<Tensor>& fy) {
  auto normalized_gram = [](const Tensor& t) {
    const std::size_t C = t.dim(1), M = t.dim(2) * t.dim(3);
    auto v = t.to_vector();
    for (std::size_t m = 0; m < M; ++m) {
      double n2 = 0.0;
      for (std::size_t c = 0; c < C; ++c) n2 += v[c * M + m] * v[c * M + m];
      const double n = std::sqrt(n2);
      for (std::size_t c = 0; c < C; ++c) v[c * M + m] = n > 0 ? v[c * M + m] / n : 0.0;
    }
    auto g = gram_oracle(v, 1, C, M);
    for (auto& x : g) x /= double(M);
    return g;
  };
  double total = 0.0;
  for (std::size_t l = 0; l < fx.size(); ++l) {
    const auto g = normalized_gram(fx[l]);
    const auto a = normalized_gram(fy[l]);
    const double C = double(fx[l].dim(1));
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) acc += (g[i] - a[i]) * (g[i] - a[i]);
    total += acc / (C * C);
  }
  return total;
}

// Central finite difference of f at coordinate `index` of a tensor held as values.
inline double central_difference(const std::function<double(const Tensor&)>& f, const Tensor& x, std::size_t index,
                                 double h) {
  auto v = x.to_vector();
  const double orig = v[index];
  v[index] = orig + h;
  const double up = f(Tensor::from_values(x.shape(), v, x.dtype()));
  v[index] = orig - h;
  const double down = f(Tensor::from_values(x.shape(), v, x.dtype()));
  return (up - down) / (2.0 * h);
}

// Two 3x3 convolutions with relus: conv1_1 (3 -> c1), conv1_2 (c1 -> c2).
inline NetworkSpec two_conv_spec(std::size_t c1 = 4, std::size_t c2 = 6) {
  NetworkSpec spec;
  spec.layers = {{"conv1_1", LayerKind::conv, 3, c1},
                 {"relu1_1", LayerKind::relu, c1, c1},
                 {"conv1_2", LayerKind::conv, c1, c2},
                 {"relu1_2", LayerKind::relu, c2, c2}};
  return spec;
}

// Sign pattern of every conv pre-activation of a pool-free extractor. Two
// inputs with equal patterns lie in the same linear region of the relus.
inline std::vector<bool> relu_pattern(const FeatureExtractor& extractor, const Tensor& image) {
  NoGradGuard no_grad;
  const auto& m = extractor.input_mean();
  const auto& s = extractor.input_std();
  Tensor x = normalize_channels(image, m, s);
  std::vector<bool> pattern;
  for (const auto& layer : extractor.spec().layers) {
    if (layer.kind != LayerKind::conv) continue;
    x = conv2d(x, extractor.weight(layer.name), extractor.bias(layer.name), 1, 1);
    for (double v : x.to_vector()) pattern.push_back(v > 0.0);
    x = relu(x);
  }
  return pattern;
}

// True when x +/- h along `index` crosses no relu boundary.
inline bool smooth_along(const FeatureExtractor& extractor, const Tensor& x, std::size_t index, double h) {
  auto v = x.to_vector();
  const double orig = v[index];
  v[index] = orig + h;
  const auto up = relu_pattern(extractor, Tensor::from_values(x.shape(), v, x.dtype()));
  v[index] = orig - h;
  const auto down = relu_pattern(extractor, Tensor::from_values(x.shape(), v, x.dtype()));
  return up == down && up == relu_pattern(extractor, x);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gramtex_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace gramtex::testing
