#include "stormcast/metrics/exact_sum.hpp"

#include <cmath>
#include <utility>

namespace stormcast::metrics {

void ExactSum::add(double x) {
  if (!std::isfinite(x)) {
    special_ += x;
    has_special_ = true;
    return;
  }
  std::size_t i = 0;
  for (double y : partials_) {
    if (std::abs(x) < std::abs(y)) std::swap(x, y);
    const double hi = x + y;
    const double lo = y - (hi - x);
    if (lo != 0.0) partials_[i++] = lo;
    x = hi;
  }
  partials_.resize(i);
  partials_.push_back(x);
}

void ExactSum::add_abs_diff(double a, double b) {
  double s = a - b;
  const double bb = s - a;
  double e = (a - (s - bb)) + (-b - bb);
  if (s < 0.0) {
    s = -s;
    e = -e;
  }
  add(s);
  add(e);
}

void ExactSum::add_product(double c, double x) {
  const double p = c * x;
  add(p);
  add(std::fma(c, x, -p));
}

void ExactSum::merge(const ExactSum& other) {
  for (double p : other.partials_) add(p);
  if (other.has_special_) {
    special_ += other.special_;
    has_special_ = true;
  }
}

double ExactSum::value() const {
  if (has_special_) return special_;
  std::size_t n = partials_.size();
  if (n == 0) return 0.0;
  double hi = partials_[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials_[--n];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  // round half to even across the remaining partials
  if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    const double yr = x - hi;
    if (y == yr) hi = x;
  }
  return hi;
}

}  // namespace stormcast::metrics
