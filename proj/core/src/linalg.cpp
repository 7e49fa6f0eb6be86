#include "zsr/linalg.hpp"

#include "zsr/error.hpp"

namespace zsr {

Matrix to_matrix(const Tensor& t) {
  if (t.rank() == 1) {
    Matrix m(1, t.extent(0));
    for (std::size_t j = 0; j < t.extent(0); ++j) m(0, j) = t[j];
    return m;
  }
  if (t.rank() != 2) {
    fail(ErrorKind::kInvalidArgument, "expected a rank-2 tensor, got shape " +
                                          shape_string(t.shape()));
  }
  Matrix m(t.extent(0), t.extent(1));
  std::copy(t.data().begin(), t.data().end(), m.data());
  return m;
}

Tensor to_tensor(const Matrix& m, DType dtype) {
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                std::vector<double>(m.data(), m.data() + m.size()), dtype);
}

Vector to_vector(const Tensor& t) {
  if (t.rank() != 1) {
    fail(ErrorKind::kInvalidArgument, "expected a rank-1 tensor, got shape " +
                                          shape_string(t.shape()));
  }
  Vector v(t.extent(0));
  for (std::size_t i = 0; i < t.extent(0); ++i) v(i) = t[i];
  return v;
}

Tensor to_tensor(const Vector& v, DType dtype) {
  return Tensor({static_cast<std::size_t>(v.size())},
                std::vector<double>(v.data(), v.data() + v.size()), dtype);
}

double log_sum_exp(const RowVector& logits) {
  const double peak = logits.maxCoeff();
  return peak + std::log((logits.array() - peak).exp().sum());
}

RowVector softmax(const RowVector& logits) {
  RowVector e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace zsr
