#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cfflow {

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // <= 0 disables clipping
};

// Adam over a flat parameter vector with global gradient-norm clipping.
class Adam {
 public:
  Adam(std::size_t parameter_count, AdamSettings settings = {});

  // Returns the gradient norm before clipping.
  double step(std::span<double> params, std::span<const double> grad);

  const AdamSettings& settings() const { return settings_; }
  std::size_t steps() const { return t_; }

 private:
  AdamSettings settings_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

}  // namespace cfflow
