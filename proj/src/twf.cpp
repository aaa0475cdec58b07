#include "gramtex/twf.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace gramtex {

namespace {

constexpr std::array<char, 4> kMagic{'T', 'W', 'F', '1'};

template <class U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <class U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw FormatError(std::string("TWF1: truncated file while reading ") + what);
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

Tensor TwfTensor::to_tensor(DType dtype) const {
  Shape s(shape.begin(), shape.end());
  if (dtype == DType::f32) return Tensor::from_vector(std::move(s), values);
  return Tensor::from_vector(std::move(s), std::vector<double>(values.begin(), values.end()));
}

TwfTensor TwfTensor::from_tensor(std::string name, const Tensor& t) {
  TwfTensor out;
  out.name = std::move(name);
  for (auto e : t.shape()) {
    if (e > std::numeric_limits<std::uint32_t>::max()) throw ContractError("TWF1: extent exceeds u32");
    out.shape.push_back(static_cast<std::uint32_t>(e));
  }
  auto v = t.to_vector();
  out.values.assign(v.begin(), v.end());
  return out;
}

void TwfFile::add(TwfTensor tensor) {
  if (find(tensor.name)) throw ValidationError("TWF1: duplicate tensor name \"" + tensor.name + "\"");
  tensors.push_back(std::move(tensor));
}

const TwfTensor* TwfFile::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const TwfTensor& TwfFile::require(const std::string& name) const {
  const auto* t = find(name);
  if (!t) throw ValidationError("TWF1: missing tensor \"" + name + "\"");
  return *t;
}

void TwfFile::write(std::ostream& out) const {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, version);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ContractError("TWF1: tensor name too long: " + t.name);
    }
    if (t.shape.size() > std::numeric_limits<std::uint8_t>::max()) {
      throw ContractError("TWF1: too many dimensions in " + t.name);
    }
    std::size_t n = 1;
    for (auto e : t.shape) n *= e;
    if (n != t.values.size()) throw ContractError("TWF1: value count does not match shape of " + t.name);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto e : t.shape) put_le<std::uint32_t>(out, e);
    std::vector<char> raw(t.values.size() * 4);
    for (std::size_t k = 0; k < t.values.size(); ++k) {
      const auto bits = std::bit_cast<std::uint32_t>(t.values[k]);
      for (int i = 0; i < 4; ++i) raw[4 * k + i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    }
    out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  }
}

void TwfFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("TWF1: cannot open " + path.string() + " for writing");
  write(out);
  if (!out) throw FormatError("TWF1: write failed for " + path.string());
}

TwfFile TwfFile::read(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw FormatError("TWF1: truncated file while reading magic");
  if (magic != kMagic) throw FormatError("TWF1: bad magic \"" + std::string(magic.data(), magic.size()) + "\"");
  TwfFile file;
  file.version = get_le<std::uint32_t>(in, "version");
  if (file.version != kVersion) {
    throw FormatError("TWF1: unsupported version " + std::to_string(file.version));
  }
  const auto count = get_le<std::uint32_t>(in, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    TwfTensor t;
    const auto name_len = get_le<std::uint16_t>(in, "name length");
    t.name.resize(name_len);
    if (!in.read(t.name.data(), name_len)) throw FormatError("TWF1: truncated file while reading a tensor name");
    const auto ndim = get_le<std::uint8_t>(in, "rank");
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      t.shape.push_back(get_le<std::uint32_t>(in, "extent"));
      n *= t.shape.back();
    }
    std::vector<unsigned char> raw(n * 4);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
      throw FormatError("TWF1: truncated file while reading values of \"" + t.name + "\"");
    }
    t.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const unsigned char* b = raw.data() + 4 * k;
      const std::uint32_t bits = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
                                 std::uint32_t(b[3]) << 24;
      t.values[k] = std::bit_cast<float>(bits);
    }
    file.add(std::move(t));
  }
  return file;
}

TwfFile TwfFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("TWF1: cannot open " + path.string());
  return read(in);
}

}  // namespace gramtex
