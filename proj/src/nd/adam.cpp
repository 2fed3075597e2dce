#include "stormcast/nd/adam.hpp"

#include <cmath>
#include <numbers>

#include "stormcast/core/errors.hpp"

namespace stormcast::nd {

Adam::Adam(std::vector<NamedTensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.lr >= 0.0)) throw ConfigError("adam: learning rate must be >= 0");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in [0, 1)");
  }
  for (const auto& [_, t] : params_) {
    state_.first_moment.emplace_back(t.size(), 0.0);
    state_.second_moment.emplace_back(t.size(), 0.0);
  }
}

void Adam::step() {
  for (const auto& [name, t] : params_) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in parameter '" + name + "'");
    }
  }
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& param = params_[p].second;
    const auto g = param.grad();
    if (g.empty()) continue;  // not reached by the last backward pass
    auto x = param.mutable_values();
    auto& m = state_.first_moment[p];
    auto& v = state_.second_moment[p];
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      x[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

void Adam::set_learning_rate(double lr) {
  if (!(lr >= 0.0)) throw ConfigError("adam: learning rate must be >= 0");
  config_.lr = lr;
}

double cosine_annealing(double base_lr, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0 || step >= total_steps) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace stormcast::nd
