#include "cfflow/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace cfflow {

Adam::Adam(std::size_t parameter_count, AdamSettings settings)
    : settings_(settings), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

double Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw std::invalid_argument("Adam::step: size mismatch");
  }
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  const double scale =
      settings_.clip_norm > 0.0 && norm > settings_.clip_norm ? settings_.clip_norm / norm : 1.0;

  ++t_;
  const double b1 = settings_.beta1, b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = settings_.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i] * scale;
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + settings_.epsilon);
  }
  return norm;
}

}  // namespace cfflow
