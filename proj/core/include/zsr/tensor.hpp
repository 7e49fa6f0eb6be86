#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace zsr {

enum class DType : std::uint8_t {
  kFloat32 = 1,
  kFloat64 = 2,
};

const char* dtype_name(DType dtype);

// Dense row-major array. Elements are held as double regardless of dtype;
// float32 tensors round every element to float on construction so that a
// save/load cycle is bit-exact.
//
// Invariants, checked on every construction path: rank >= 1, every extent
// >= 1, product(shape) == data.size(), every element finite.
class Tensor {
 public:
  Tensor(std::vector<std::size_t> shape, std::vector<double> data,
         DType dtype = DType::kFloat64);

  static Tensor zeros(std::vector<std::size_t> shape,
                      DType dtype = DType::kFloat64);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  DType dtype() const { return dtype_; }

  std::span<const double> data() const { return data_; }

  double operator[](std::size_t flat) const { return data_[flat]; }
  double at(std::initializer_list<std::size_t> index) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  DType dtype_;
};

std::string shape_string(std::span<const std::size_t> shape);

// On-disk container ("DPT1"), little-endian throughout:
//   magic "DPT1" | dtype u8 | rank u8 | 2 zero bytes | rank x u64 extents |
//   row-major payload
void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

// Byte-level codec used by save/load; exposed for tests and tooling.
std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

struct TensorHeader {
  DType dtype;
  std::vector<std::size_t> shape;
};

// Reads and validates only the header (magic, dtype, extents) and checks the
// file size against the declared payload. Used for cheap shape checks.
TensorHeader read_tensor_header(const std::filesystem::path& path);

}  // namespace zsr
