#pragma once

#include <cmath>

#include <Eigen/Core>

#include "zsr/tensor.hpp"

namespace zsr {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Rank-2 tensor <-> matrix. Rank-1 tensors convert to a single-row matrix.
Matrix to_matrix(const Tensor& t);
Tensor to_tensor(const Matrix& m, DType dtype = DType::kFloat64);
Vector to_vector(const Tensor& t);
Tensor to_tensor(const Vector& v, DType dtype = DType::kFloat64);

// Numerically stable softmax over a row of logits.
RowVector softmax(const RowVector& logits);
double log_sum_exp(const RowVector& logits);

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace zsr
