#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stormcast/nd/random.hpp"
#include "stormcast/nd/tensor.hpp"

namespace stormcast::nd {

using NamedTensor = std::pair<std::string, Tensor>;

/// Ordered, named collection of trainable leaves.
class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor t);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const;

  std::vector<NamedTensor>& items() { return items_; }
  const std::vector<NamedTensor>& items() const { return items_; }
  std::size_t count() const;  // total scalar parameters

  void zero_grad();
  void set_requires_grad(bool on);
  /// Replaces values from a loaded checkpoint; names and shapes must match.
  void assign(const std::vector<NamedTensor>& loaded);
  /// Independent copy of the values (no gradients).
  ParameterSet clone() const;

 private:
  std::vector<NamedTensor> items_;
};

/// Glorot-uniform initialized tensor.
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace stormcast::nd
