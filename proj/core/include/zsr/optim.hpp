#pragma once

#include <cstdint>
#include <string_view>

#include "zsr/linalg.hpp"

namespace zsr {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam moments for one parameter tensor. Shapes are fixed at construction.
class AdamState {
 public:
  AdamState() = default;
  AdamState(Eigen::Index rows, Eigen::Index cols)
      : m_(Matrix::Zero(rows, cols)), v_(Matrix::Zero(rows, cols)) {}

  // In-place update with bias-corrected moments.
  void step(Eigen::Ref<Matrix> param, const Matrix& grad, double lr,
            const AdamConfig& cfg = {});
  // Overload for column vectors (biases, alpha weights).
  void step(Eigen::Ref<Vector> param, const Vector& grad, double lr,
            const AdamConfig& cfg = {});

  std::int64_t steps() const { return t_; }

 private:
  Matrix m_;
  Matrix v_;
  std::int64_t t_ = 0;
};

enum class ScheduleKind { kConstant, kCosine };

ScheduleKind parse_schedule_kind(std::string_view name);
const char* schedule_kind_name(ScheduleKind kind);

// Learning-rate schedule for test-time refinement. The cosine schedule anneals
// from `base_rate` to 0 over `horizon` steps and stays at 0 past it.
struct Schedule {
  ScheduleKind kind = ScheduleKind::kCosine;
  double base_rate = 0.01;
  std::int64_t horizon = 1;

  double rate(std::int64_t step) const;
};

}  // namespace zsr
