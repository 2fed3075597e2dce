#include "stormcast/diffusion/schedule.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <string>

#include "stormcast/core/errors.hpp"
#include "stormcast/nd/ops.hpp"

namespace stormcast::diffusion {

DiffusionSchedule::DiffusionSchedule(double a, double b, std::size_t steps) : a_(a), b_(b), steps_(steps) {
  if (steps_ == 0) throw ConfigError("diffusion schedule: steps must be >= 1");
  if (!(a_ >= 0.0) || !(a_ + b_ >= 0.0)) {
    throw ConfigError("diffusion schedule: alpha(t) = " + std::to_string(a_) + " + " + std::to_string(b_) +
                      " t is negative on [0, 1]");
  }
}

DiffusionSchedule DiffusionSchedule::custom(std::function<double(double)> alpha, std::size_t steps) {
  DiffusionSchedule s(0.0, 0.0, steps);
  for (int i = 0; i <= 100; ++i) {
    const double t = i / 100.0;
    if (!(alpha(t) >= 0.0)) throw ConfigError("diffusion schedule: alpha(" + std::to_string(t) + ") < 0");
  }
  s.custom_ = std::move(alpha);
  return s;
}

double DiffusionSchedule::alpha(double t) const { return custom_ ? custom_(t) : a_ + b_ * t; }

double DiffusionSchedule::alpha_bar(double t) const {
  if (!custom_) return a_ * t + 0.5 * b_ * t * t;
  if (t == 0.0) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(custom_, 0.0, t, 15, 1e-14);
}

double DiffusionSchedule::sigma2(double t) const { return -std::expm1(-2.0 * alpha_bar(t)); }

double DiffusionSchedule::sigma(double t) const { return std::sqrt(sigma2(t)); }

KernelMoments forward_kernel(const nd::Tensor& x_tau, double tau, double t, const DiffusionSchedule& schedule) {
  if (!(0.0 <= tau && tau <= t && t <= 1.0)) {
    throw ConfigError("forward_kernel: need 0 <= tau <= t <= 1, got tau=" + std::to_string(tau) +
                      ", t=" + std::to_string(t));
  }
  const double ab = schedule.alpha_bar(tau, t);
  return {nd::scale(x_tau, std::exp(-ab)), -std::expm1(-2.0 * ab)};
}

nd::Tensor perturb(const nd::Tensor& x0, double t, const nd::Tensor& z, const DiffusionSchedule& schedule) {
  if (x0.shape() != z.shape()) throw ShapeError("perturb: noise shape differs from x0");
  return nd::add(nd::scale(x0, std::exp(-schedule.alpha_bar(t))), nd::scale(z, schedule.sigma(t)));
}

nd::Tensor true_score(const nd::Tensor& xt, const nd::Tensor& x0, double t, const DiffusionSchedule& schedule) {
  if (!(t > 0.0)) throw ConfigError("true_score: t must be > 0 (sigma_0 = 0)");
  const nd::Tensor resid = nd::sub(xt, nd::scale(x0, std::exp(-schedule.alpha_bar(t))));
  return nd::scale(resid, -1.0 / schedule.sigma2(t));
}

}  // namespace stormcast::diffusion
