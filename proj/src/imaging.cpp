#include "gramtex/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>

namespace gramtex {

Tensor ImageBuffer::to_tensor(DType dtype) const {
  const std::size_t plane = width * height;
  std::vector<double> v(3 * plane);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c) v[c * plane + y * width + x] = at(x, y, c) / 255.0;
  return Tensor::from_values({1, 3, height, width}, v, dtype);
}

ImageBuffer ImageBuffer::from_tensor(const Tensor& image) {
  if (image.ndim() != 4 || image.dim(0) != 1 || image.dim(1) != 3) {
    throw DimensionError("image tensor must be [1,3,H,W], got " + shape_string(image.shape()));
  }
  const std::size_t h = image.dim(2), w = image.dim(3), plane = h * w;
  ImageBuffer out(w, h);
  const auto v = image.to_vector();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double s = std::clamp(v[c * plane + y * w + x], 0.0, 1.0);
        out.at(x, y, c) = static_cast<std::uint8_t>(std::floor(s * 255.0 + 0.5));
      }
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw FormatError("cannot open " + path.string());
  return f;
}

// libpng reports errors by longjmp; the message is parked here and rethrown
// as a FormatError once control is back in C++ frames.
struct PngErrorSlot {
  char message[256] = {0};
};

void png_error_handler(png_structp png, png_const_charp message) {
  auto* slot = static_cast<PngErrorSlot*>(png_get_error_ptr(png));
  std::snprintf(slot->message, sizeof(slot->message), "%s", message);
  png_longjmp(png, 1);
}
void png_warning_handler(png_structp, png_const_charp) {}

// Decoded PNG as 8-bit samples with `channels` per pixel (1 = gray, 3 = RGB).
struct PngPixels {
  std::size_t width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> data;
};

PngPixels read_png(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  PngErrorSlot error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_handler, png_warning_handler);
  if (!png) throw FormatError("PNG: cannot allocate reader");
  png_infop info = png_create_info_struct(png);
  struct Cleanup {
    png_structp* p;
    png_infop* i;
    ~Cleanup() { png_destroy_read_struct(p, i, nullptr); }
  } cleanup{&png, &info};

  PngPixels out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    throw FormatError("PNG: " + std::string(error.message) + " in " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.channels = png_get_channels(png, info);
  if (out.channels != 1 && out.channels != 3) {
    throw FormatError("PNG: unsupported channel layout in " + path.string());
  }
  const std::size_t stride = png_get_rowbytes(png, info);
  out.data.resize(stride * out.height);
  rows.resize(out.height);
  for (std::size_t y = 0; y < out.height; ++y) rows[y] = out.data.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return out;
}

void write_png(const std::filesystem::path& path, std::size_t width, std::size_t height, int color_type,
               std::size_t channels, const std::uint8_t* data) {
  auto file = open_file(path, "wb");
  PngErrorSlot error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_error_handler, png_warning_handler);
  if (!png) throw FormatError("PNG: cannot allocate writer");
  png_infop info = png_create_info_struct(png);
  struct Cleanup {
    png_structp* p;
    png_infop* i;
    ~Cleanup() { png_destroy_write_struct(p, i); }
  } cleanup{&png, &info};

  if (setjmp(png_jmpbuf(png))) {
    throw FormatError("PNG: " + std::string(error.message) + " writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(data + y * width * channels));
  }
  png_write_end(png, nullptr);
}

bool has_png_signature(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::array<unsigned char, 8> sig{};
  in.read(reinterpret_cast<char*>(sig.data()), sig.size());
  return in.gcount() == 8 && png_sig_cmp(sig.data(), 0, 8) == 0;
}

// Skips whitespace and '#' comments between PPM header fields.
std::size_t read_ppm_field(std::istream& in, const std::string& path) {
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      ch = in.get();
    } else {
      break;
    }
  }
  if (ch == EOF || !std::isdigit(ch)) throw FormatError("PPM: malformed header in " + path);
  std::size_t value = 0;
  while (ch != EOF && std::isdigit(ch)) {
    value = value * 10 + static_cast<std::size_t>(ch - '0');
    if (value > (1u << 24)) throw FormatError("PPM: header value too large in " + path);
    ch = in.get();
  }
  if (ch == EOF || !std::isspace(ch)) throw FormatError("PPM: malformed header in " + path);
  return value;
}

ImageBuffer read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '6') {
    throw FormatError("unsupported image format (expected PNG or binary PPM): " + path.string());
  }
  const std::size_t w = read_ppm_field(in, path.string());
  const std::size_t h = read_ppm_field(in, path.string());
  const std::size_t maxval = read_ppm_field(in, path.string());
  if (maxval != 255) throw FormatError("PPM: only maxval 255 is supported in " + path.string());
  if (w == 0 || h == 0) throw FormatError("PPM: empty image " + path.string());
  ImageBuffer out(w, h);
  in.read(reinterpret_cast<char*>(out.samples.data()), static_cast<std::streamsize>(out.samples.size()));
  if (static_cast<std::size_t>(in.gcount()) != out.samples.size()) {
    throw FormatError("PPM: truncated pixel data in " + path.string());
  }
  return out;
}

std::string lower_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

ImageBuffer read_image(const std::filesystem::path& path) {
  if (!has_png_signature(path)) return read_ppm(path);
  auto px = read_png(path);
  ImageBuffer out(px.width, px.height);
  const std::size_t stride = px.width * px.channels;
  for (std::size_t y = 0; y < px.height; ++y)
    for (std::size_t x = 0; x < px.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out.at(x, y, c) = px.data[y * stride + x * px.channels + (px.channels == 1 ? 0 : c)];
  return out;
}

void write_image(const std::filesystem::path& path, const ImageBuffer& image) {
  if (image.samples.size() != 3 * image.width * image.height) {
    throw ContractError("image buffer sample count does not match its extents");
  }
  const auto ext = lower_extension(path);
  if (ext == ".png") {
    write_png(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 3, image.samples.data());
  } else if (ext == ".ppm") {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.samples.data()), static_cast<std::streamsize>(image.samples.size()));
    if (!out) throw FormatError("write failed for " + path.string());
  } else {
    throw FormatError("unsupported output image extension \"" + ext + "\" (use .png or .ppm)");
  }
}

LabelMap read_label_map(const std::filesystem::path& path) {
  if (!has_png_signature(path)) throw FormatError("label map must be a grayscale PNG: " + path.string());
  auto px = read_png(path);
  if (px.channels != 1) throw FormatError("label map must be a grayscale PNG: " + path.string());
  LabelMap map;
  map.width = px.width;
  map.height = px.height;
  map.labels = std::move(px.data);
  return map;
}

void write_label_map(const std::filesystem::path& path, const LabelMap& map) {
  if (map.labels.size() != map.width * map.height) throw ContractError("label map size does not match its extents");
  write_png(path, map.width, map.height, PNG_COLOR_TYPE_GRAY, 1, map.labels.data());
}

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace {

// Four taps and weights per output coordinate along one axis.
struct AxisTaps {
  std::vector<std::array<std::size_t, 4>> index;
  std::vector<std::array<double, 4>> weight;
};

AxisTaps axis_taps(std::size_t in, std::size_t out) {
  AxisTaps t;
  t.index.resize(out);
  t.weight.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    for (int k = 0; k < 4; ++k) {
      const long long pos = static_cast<long long>(base) + k - 1;
      t.index[o][k] = static_cast<std::size_t>(std::clamp<long long>(pos, 0, static_cast<long long>(in) - 1));
      t.weight[o][k] = cubic_kernel(frac - static_cast<double>(k - 1));
    }
  }
  return t;
}

}  // namespace

Tensor bicubic_resize(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.ndim() != 4) throw DimensionError("bicubic_resize: expected [B,C,H,W], got " + shape_string(image.shape()));
  if (out_h == 0 || out_w == 0) throw GeometryError("bicubic_resize: output extents must be positive");
  const std::size_t B = image.dim(0), C = image.dim(1), H = image.dim(2), W = image.dim(3);
  if (H == 0 || W == 0) throw GeometryError("bicubic_resize: empty input");
  const AxisTaps ty = axis_taps(H, out_h);
  const AxisTaps tx = axis_taps(W, out_w);
  const std::size_t planes = B * C;
  Storage out = detail::make_storage(image.dtype(), planes * out_h * out_w);
  dispatch(image.dtype(), [&]<class T>() {
    auto in = image.data<T>();
    auto o = detail::span_of<T>(out);
    std::vector<double> rows(H * out_w);
#pragma omp parallel for schedule(static) firstprivate(rows)
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(planes); ++p) {
      const T* src = in.data() + p * H * W;
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
          double acc = 0.0;
          for (int k = 0; k < 4; ++k) acc += tx.weight[x][k] * static_cast<double>(src[y * W + tx.index[x][k]]);
          rows[y * out_w + x] = acc;
        }
      T* dst = o.data() + p * out_h * out_w;
      for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
          double acc = 0.0;
          for (int k = 0; k < 4; ++k) acc += ty.weight[y][k] * rows[ty.index[y][k] * out_w + x];
          dst[y * out_w + x] = static_cast<T>(acc);
        }
    }
  });
  return Tensor::from_node([&] {
    auto node = std::make_shared<detail::Node>();
    node->shape = {B, C, out_h, out_w};
    node->value = std::move(out);
    node->op = "bicubic_resize";
    return node;
  }());
}

Tensor bicubic_upsample(const Tensor& image, std::size_t factor) {
  if (factor == 0) throw GeometryError("bicubic_upsample: factor must be positive");
  if (image.ndim() != 4) throw DimensionError("bicubic_upsample: expected [B,C,H,W]");
  return bicubic_resize(image, image.dim(2) * factor, image.dim(3) * factor);
}

Tensor bicubic_downsample(const Tensor& image, std::size_t factor) {
  if (factor == 0) throw GeometryError("bicubic_downsample: factor must be positive");
  if (image.ndim() != 4) throw DimensionError("bicubic_downsample: expected [B,C,H,W]");
  if (image.dim(2) % factor != 0 || image.dim(3) % factor != 0) {
    throw GeometryError("bicubic_downsample: extent " + std::to_string(image.dim(2)) + "x" +
                        std::to_string(image.dim(3)) + " not divisible by " + std::to_string(factor));
  }
  return bicubic_resize(image, image.dim(2) / factor, image.dim(3) / factor);
}

Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t out_h, std::size_t out_w) {
  if (image.ndim() != 4) throw DimensionError("crop: expected [B,C,H,W], got " + shape_string(image.shape()));
  const std::size_t B = image.dim(0), C = image.dim(1), H = image.dim(2), W = image.dim(3);
  if (top + out_h > H || left + out_w > W) {
    throw SizeError("crop: window " + std::to_string(out_h) + "x" + std::to_string(out_w) + " at (" +
                    std::to_string(top) + "," + std::to_string(left) + ") exceeds " + std::to_string(H) + "x" +
                    std::to_string(W));
  }
  return dispatch(image.dtype(), [&]<class T>() {
    auto in = image.data<T>();
    std::vector<T> out(B * C * out_h * out_w);
    for (std::size_t p = 0; p < B * C; ++p)
      for (std::size_t y = 0; y < out_h; ++y)
        std::copy_n(in.data() + (p * H + top + y) * W + left, out_w, out.data() + (p * out_h + y) * out_w);
    return Tensor::from_vector<T>({B, C, out_h, out_w}, std::move(out));
  });
}

Tensor center_crop(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.ndim() != 4) throw DimensionError("center_crop: expected [B,C,H,W], got " + shape_string(image.shape()));
  const std::size_t H = image.dim(2), W = image.dim(3);
  if (out_h > H || out_w > W) {
    throw SizeError("center_crop: requested " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                    " from a " + std::to_string(H) + "x" + std::to_string(W) + " image");
  }
  return crop(image, (H - out_h) / 2, (W - out_w) / 2, out_h, out_w);
}

Tensor center_crop(const Tensor& image, std::size_t size) { return center_crop(image, size, size); }

LabelMap center_crop(const LabelMap& map, std::size_t out_h, std::size_t out_w) {
  if (out_h > map.height || out_w > map.width) {
    throw SizeError("center_crop: requested " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                    " from a " + std::to_string(map.height) + "x" + std::to_string(map.width) + " label map");
  }
  const std::size_t top = (map.height - out_h) / 2, left = (map.width - out_w) / 2;
  LabelMap out;
  out.width = out_w;
  out.height = out_h;
  out.labels.resize(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y)
    std::copy_n(map.labels.data() + (top + y) * map.width + left, out_w, out.labels.data() + y * out_w);
  return out;
}

MaskSet build_mask_set(const LabelMap& labels) {
  const std::size_t n = labels.width * labels.height;
  if (n == 0) throw SizeError("build_mask_set: empty label map");
  if (labels.labels.size() != n) throw ContractError("label map size does not match its extents");

  std::array<std::size_t, 256> counts{};
  for (auto l : labels.labels) ++counts[l];
  std::vector<int> classes;
  for (int c = 0; c < 256; ++c)
    if (counts[c] > 0) classes.push_back(c);
  // stable_sort keeps ascending id order among equal counts.
  std::stable_sort(classes.begin(), classes.end(), [&](int a, int b) { return counts[a] > counts[b]; });

  MaskSet set;
  set.height = labels.height;
  set.width = labels.width;
  const std::size_t named = std::min(kMaskClasses, classes.size());
  std::array<bool, 256> is_named{};
  for (std::size_t k = 0; k < named; ++k) {
    const int c = classes[k];
    is_named[c] = true;
    std::vector<std::uint8_t> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = labels.labels[i] == c ? 1 : 0;
    set.masks.push_back(std::move(m));
    set.labels.push_back(c);
    set.replica.push_back(false);
  }
  std::vector<std::uint8_t> others(n);
  for (std::size_t i = 0; i < n; ++i) others[i] = is_named[labels.labels[i]] ? 0 : 1;
  // With six or fewer classes "others" is empty and only pads the set.
  const bool padding = classes.size() <= kMaskClasses;
  while (set.masks.size() < kMaskCount) {
    set.masks.push_back(others);
    set.labels.push_back(MaskSet::kOthers);
    set.replica.push_back(padding);
  }
  return set;
}

}  // namespace gramtex
