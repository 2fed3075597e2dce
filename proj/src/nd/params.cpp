#include "stormcast/nd/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stormcast/core/errors.hpp"

namespace stormcast::nd {

Tensor& ParameterSet::add(std::string name, Tensor t) {
  if (contains(name)) throw std::logic_error("duplicate parameter '" + name + "'");
  t.set_requires_grad(true);
  items_.emplace_back(std::move(name), std::move(t));
  return items_.back().second;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw std::out_of_range("no parameter '" + name + "'");
}

Tensor& ParameterSet::get(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const ParameterSet&>(*this).get(name));
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(items_.begin(), items_.end(), [&](const NamedTensor& p) { return p.first == name; });
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : items_) n += t.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [_, t] : items_) t.zero_grad();
}

void ParameterSet::set_requires_grad(bool on) {
  for (auto& [_, t] : items_) t.set_requires_grad(on);
}

void ParameterSet::assign(const std::vector<NamedTensor>& loaded) {
  for (auto& [name, t] : items_) {
    auto it = std::find_if(loaded.begin(), loaded.end(), [&](const NamedTensor& p) { return p.first == name; });
    if (it == loaded.end()) throw DataError("checkpoint is missing parameter '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw ShapeError("checkpoint parameter '" + name + "' has shape " + shape_string(it->second.shape()) +
                       ", expected " + shape_string(t.shape()));
    }
    std::copy(it->second.values().begin(), it->second.values().end(), t.mutable_values().begin());
  }
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  for (const auto& [name, t] : items_) out.items_.emplace_back(name, t.detach());
  for (auto& [_, t] : out.items_) t.set_requires_grad(true);
  return out;
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-limit, limit);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace stormcast::nd
