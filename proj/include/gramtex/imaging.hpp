#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gramtex/tensor.hpp"
#include "gramtex/texture_loss.hpp"

namespace gramtex {

// 8-bit RGB, row-major, interleaved.
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> samples;

  ImageBuffer() = default;
  ImageBuffer(std::size_t w, std::size_t h) : width(w), height(h), samples(3 * w * h, 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return samples[3 * (y * width + x) + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return samples[3 * (y * width + x) + c]; }

  // [1, 3, H, W] with values sample / 255.
  Tensor to_tensor(DType dtype = DType::f32) const;
  // Expects [1, 3, H, W]; values are clamped to [0, 1] and quantized as floor(255 v + 0.5).
  static ImageBuffer from_tensor(const Tensor& image);
};

struct LabelMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> labels;
};

// PNG (8-bit gray, gray+alpha, RGB, RGBA; gray is replicated to RGB, alpha dropped)
// or binary PPM (P6, maxval 255). Format is detected from the file content.
ImageBuffer read_image(const std::filesystem::path& path);
// Format chosen by extension: .png or .ppm.
void write_image(const std::filesystem::path& path, const ImageBuffer& image);

// 8-bit grayscale PNG; each pixel value is a class id.
LabelMap read_label_map(const std::filesystem::path& path);
void write_label_map(const std::filesystem::path& path, const LabelMap& map);

// Separable cubic convolution (a = -0.5), half-pixel centers, clamped edges.
// Works on [B, C, H, W]; the result does not participate in autodiff.
Tensor bicubic_resize(const Tensor& image, std::size_t out_h, std::size_t out_w);
Tensor bicubic_upsample(const Tensor& image, std::size_t factor);
Tensor bicubic_downsample(const Tensor& image, std::size_t factor);

// Cubic kernel weight at distance x.
double cubic_kernel(double x);

// Centered crop of a [B, C, H, W] tensor; odd remainders put the extra row/column
// at the bottom/right.
Tensor center_crop(const Tensor& image, std::size_t out_h, std::size_t out_w);
Tensor center_crop(const Tensor& image, std::size_t size);
// Window [top, top+h) x [left, left+w).
Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t out_h, std::size_t out_w);

inline constexpr std::size_t kMaskClasses = 6;
inline constexpr std::size_t kMaskCount = 7;

// Six most frequent classes (ties to the smaller id) get their own mask; every
// other pixel falls into "others". The set is padded to seven masks with
// replica "others" masks when the label map has six or fewer classes.
MaskSet build_mask_set(const LabelMap& labels);

// Same window as center_crop on an image of the label map's extents.
LabelMap center_crop(const LabelMap& map, std::size_t out_h, std::size_t out_w);

}  // namespace gramtex
