#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stormcast/nd/params.hpp"

namespace stormcast::nd {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter moment buffers plus the shared step counter.
struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step = 0;
};

class Adam {
 public:
  /// Tracks the given leaves; lr must be >= 0 (0 freezes the parameters).
  Adam(std::vector<NamedTensor> params, AdamConfig config);

  /// One bias-corrected Adam update from the parameters' current gradients.
  /// Throws NumericError naming the first parameter with a non-finite gradient.
  void step();
  void zero_grad();

  void set_learning_rate(double lr);
  double learning_rate() const { return config_.lr; }
  const AdamState& state() const { return state_; }

 private:
  std::vector<NamedTensor> params_;
  AdamConfig config_;
  AdamState state_;
};

/// Cosine annealing from base_lr at step 0 to 0 at total_steps.
double cosine_annealing(double base_lr, std::size_t step, std::size_t total_steps);

}  // namespace stormcast::nd
