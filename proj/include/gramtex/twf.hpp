#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gramtex/tensor.hpp"

namespace gramtex {

// TWF1: little-endian tensor container.
//   "TWF1" | u32 version | u32 count |
//   count x ( u16 name_len | name | u8 ndim | ndim x u32 extent | prod(extent) x f32 )
struct TwfTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> values;

  Tensor to_tensor(DType dtype = DType::f32) const;
  static TwfTensor from_tensor(std::string name, const Tensor& t);
};

class TwfFile {
 public:
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::vector<TwfTensor> tensors;

  // Appends; duplicate names are rejected with a ValidationError.
  void add(TwfTensor tensor);
  void add(std::string name, const Tensor& t) { add(TwfTensor::from_tensor(std::move(name), t)); }
  const TwfTensor* find(const std::string& name) const;
  // Like find, but throws ValidationError naming the tensor when absent.
  const TwfTensor& require(const std::string& name) const;

  void write(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static TwfFile read(std::istream& in);
  static TwfFile load(const std::filesystem::path& path);
};

}  // namespace gramtex
