#pragma once

#include <vector>

namespace stormcast::metrics {

/// Exact floating-point accumulator (Shewchuk's non-overlapping partials).
/// value() is the correctly rounded sum of everything added, so the result
/// does not depend on the order of additions or on how partial accumulators
/// are merged.
class ExactSum {
 public:
  void add(double x);
  /// Adds |a - b| without rounding the difference.
  void add_abs_diff(double a, double b);
  /// Adds c * x without rounding the product.
  void add_product(double c, double x);
  void merge(const ExactSum& other);
  double value() const;

 private:
  std::vector<double> partials_;
  double special_ = 0.0;  // running sum of non-finite inputs
  bool has_special_ = false;
};

}  // namespace stormcast::metrics
