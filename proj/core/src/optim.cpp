#include "zsr/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "zsr/error.hpp"

namespace zsr {

void AdamState::step(Eigen::Ref<Matrix> param, const Matrix& grad, double lr,
                     const AdamConfig& cfg) {
  if (m_.rows() != grad.rows() || m_.cols() != grad.cols()) {
    m_ = Matrix::Zero(grad.rows(), grad.cols());
    v_ = Matrix::Zero(grad.rows(), grad.cols());
  }
  ++t_;
  m_ = cfg.beta1 * m_ + (1.0 - cfg.beta1) * grad;
  v_ = cfg.beta2 * v_ + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
  param.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg.epsilon);
}

void AdamState::step(Eigen::Ref<Vector> param, const Vector& grad, double lr,
                     const AdamConfig& cfg) {
  Matrix p = param.transpose();
  step(Eigen::Ref<Matrix>(p), Matrix(grad.transpose()), lr, cfg);
  param = p.transpose();
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "constant") return ScheduleKind::kConstant;
  if (name == "cosine") return ScheduleKind::kCosine;
  fail(ErrorKind::kInvalidArgument, "unknown schedule \"" + std::string(name) + "\"");
}

const char* schedule_kind_name(ScheduleKind kind) {
  return kind == ScheduleKind::kConstant ? "constant" : "cosine";
}

double Schedule::rate(std::int64_t step) const {
  if (kind == ScheduleKind::kConstant) return base_rate;
  const double h = static_cast<double>(std::max<std::int64_t>(horizon, 1));
  const double s = std::clamp(static_cast<double>(step), 0.0, h);
  return base_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * s / h));
}

}  // namespace zsr
