#include "zsr/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "zsr/error.hpp"

namespace zsr {
namespace {

constexpr char kMagic[4] = {'D', 'P', 'T', '1'};
constexpr std::size_t kFixedHeader = 8;

std::size_t checked_product(std::span<const std::size_t> shape) {
  std::size_t total = 1;
  for (std::size_t e : shape) {
    if (e != 0 && total > SIZE_MAX / e) {
      fail(ErrorKind::kDataCorruption, "tensor extent product overflows");
    }
    total *= e;
  }
  return total;
}

std::size_t element_bytes(DType dtype) {
  return dtype == DType::kFloat32 ? 4 : 8;
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

DType parse_dtype(std::uint8_t code) {
  if (code == 1) return DType::kFloat32;
  if (code == 2) return DType::kFloat64;
  fail(ErrorKind::kDataCorruption, "unknown dtype code " + std::to_string(code));
}

// Parses the fixed header plus extents; returns the header and the payload
// offset.
std::pair<TensorHeader, std::size_t> parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorKind::kDataCorruption, "bad magic");
  }
  if (bytes.size() < kFixedHeader) {
    fail(ErrorKind::kDataCorruption, "truncated header");
  }
  TensorHeader header{parse_dtype(bytes[4]), {}};
  const std::size_t rank = bytes[5];
  if (rank == 0) fail(ErrorKind::kDataCorruption, "rank must be at least 1");
  if (bytes[6] != 0 || bytes[7] != 0) {
    fail(ErrorKind::kDataCorruption, "reserved header bytes are not zero");
  }
  const std::size_t offset = kFixedHeader + 8 * rank;
  if (bytes.size() < offset) fail(ErrorKind::kDataCorruption, "truncated header");
  header.shape.reserve(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::uint64_t e = get_u64(bytes.data() + kFixedHeader + 8 * i);
    if (e == 0) fail(ErrorKind::kDataCorruption, "zero extent");
    if (e > SIZE_MAX) fail(ErrorKind::kDataCorruption, "extent too large");
    header.shape.push_back(static_cast<std::size_t>(e));
  }
  return {header, offset};
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) {
      fail(ErrorKind::kIo, "file not found: " + path.string());
    }
    fail(ErrorKind::kIo, "cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

const char* dtype_name(DType dtype) {
  return dtype == DType::kFloat32 ? "float32" : "float64";
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data, DType dtype)
    : shape_(std::move(shape)), data_(std::move(data)), dtype_(dtype) {
  if (dtype_ != DType::kFloat32 && dtype_ != DType::kFloat64) {
    fail(ErrorKind::kInvalidArgument, "unknown dtype");
  }
  if (shape_.empty()) fail(ErrorKind::kInvalidArgument, "tensor rank must be at least 1");
  if (shape_.size() > 255) fail(ErrorKind::kInvalidArgument, "tensor rank exceeds 255");
  for (std::size_t e : shape_) {
    if (e == 0) fail(ErrorKind::kInvalidArgument, "zero extent");
  }
  if (checked_product(shape_) != data_.size()) {
    fail(ErrorKind::kInvalidArgument,
         "payload length mismatch: shape " + shape_string(shape_) + " needs " +
             std::to_string(checked_product(shape_)) + " elements, got " +
             std::to_string(data_.size()));
  }
  for (double& v : data_) {
    if (dtype_ == DType::kFloat32) v = static_cast<double>(static_cast<float>(v));
    if (!std::isfinite(v)) fail(ErrorKind::kInvalidArgument, "non-finite element");
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, DType dtype) {
  const std::size_t n = checked_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), dtype);
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    fail(ErrorKind::kInvalidArgument, "index rank does not match tensor rank");
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) fail(ErrorKind::kInvalidArgument, "index out of range");
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return data_[flat];
}

std::string shape_string(std::span<const std::size_t> shape) {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  return os.str();
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  std::vector<std::uint8_t> out;
  const std::size_t width = element_bytes(t.dtype());
  out.reserve(kFixedHeader + 8 * t.rank() + width * t.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(static_cast<std::uint8_t>(t.dtype()));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  out.push_back(0);
  out.push_back(0);
  for (std::size_t e : t.shape()) put_u64(out, e);
  for (double v : t.data()) {
    if (t.dtype() == DType::kFloat32) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    } else {
      put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  auto [header, offset] = parse_header(bytes);
  const std::size_t count = checked_product(header.shape);
  const std::size_t width = element_bytes(header.dtype);
  if (bytes.size() - offset != count * width) {
    fail(ErrorKind::kDataCorruption,
         "payload length mismatch: shape " + shape_string(header.shape) + " needs " +
             std::to_string(count * width) + " bytes, file has " +
             std::to_string(bytes.size() - offset));
  }
  std::vector<double> data(count);
  const std::uint8_t* p = bytes.data() + offset;
  for (std::size_t i = 0; i < count; ++i, p += width) {
    double v;
    if (header.dtype == DType::kFloat32) {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) bits = (bits << 8) | p[b];
      v = static_cast<double>(std::bit_cast<float>(bits));
    } else {
      v = std::bit_cast<double>(get_u64(p));
    }
    if (!std::isfinite(v)) fail(ErrorKind::kDataCorruption, "non-finite element");
    data[i] = v;
  }
  return Tensor(std::move(header.shape), std::move(data), header.dtype);
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_tensor(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(e.what()) + " (" + path.string() + ")");
  }
}

TensorHeader read_tensor_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) {
      fail(ErrorKind::kIo, "file not found: " + path.string());
    }
    fail(ErrorKind::kIo, "cannot open " + path.string());
  }
  std::vector<std::uint8_t> head(kFixedHeader + 8 * 255);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  try {
    auto [header, offset] = parse_header(head);
    const auto file_size = std::filesystem::file_size(path);
    const std::size_t expected =
        offset + checked_product(header.shape) * element_bytes(header.dtype);
    if (file_size != expected) fail(ErrorKind::kDataCorruption, "payload length mismatch");
    return header;
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(e.what()) + " (" + path.string() + ")");
  }
}

}  // namespace zsr
