#pragma once

#include <cstddef>
#include <functional>

#include "stormcast/nd/tensor.hpp"

namespace stormcast::diffusion {

/// Mean-reversion speed alpha(t) on t in [0, 1] and the quantities derived
/// from it. The linear schedule alpha(t) = a + b t has closed forms; a custom
/// alpha(t) is integrated numerically.
class DiffusionSchedule {
 public:
  /// alpha(t) = a + b t. Throws ConfigError if alpha < 0 anywhere on [0,1] or steps == 0.
  explicit DiffusionSchedule(double a = 0.1, double b = 19.9, std::size_t steps = 100);
  static DiffusionSchedule custom(std::function<double(double)> alpha, std::size_t steps = 100);

  double alpha(double t) const;
  /// Integral of alpha over [0, t].
  double alpha_bar(double t) const;
  /// Integral of alpha over [tau, t].
  double alpha_bar(double tau, double t) const { return alpha_bar(t) - alpha_bar(tau); }
  double sigma2(double t) const;
  double sigma(double t) const;

  std::size_t steps() const { return steps_; }
  double dt() const { return 1.0 / static_cast<double>(steps_); }
  double a() const { return a_; }
  double b() const { return b_; }
  bool is_linear() const { return !custom_; }

 private:
  double a_ = 0.1, b_ = 19.9;
  std::size_t steps_ = 100;
  std::function<double(double)> custom_;
};

/// Smallest training time; sigma(0) = 0 makes the score singular.
inline constexpr double kTMin = 1e-3;

struct KernelMoments {
  nd::Tensor mean;
  double variance = 0.0;  // per element
};

/// p(x_t | x_tau) = N(x_tau e^{-abar(tau:t)}, (1 - e^{-2 abar(tau:t)}) I).
/// Throws ConfigError unless 0 <= tau <= t <= 1.
KernelMoments forward_kernel(const nd::Tensor& x_tau, double tau, double t, const DiffusionSchedule& schedule);

/// x_t = x_0 e^{-abar_t} + sigma_t z. Differentiable in x_0 and z.
nd::Tensor perturb(const nd::Tensor& x0, double t, const nd::Tensor& z, const DiffusionSchedule& schedule);

/// -(x_t - x_0 e^{-abar_t}) / sigma_t^2. Throws ConfigError for t <= 0.
nd::Tensor true_score(const nd::Tensor& xt, const nd::Tensor& x0, double t, const DiffusionSchedule& schedule);

}  // namespace stormcast::diffusion
