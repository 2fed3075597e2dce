#pragma once

#include <cstddef>
#include <vector>

#include "stormcast/core/types.hpp"
#include "stormcast/nd/tensor.hpp"

namespace stormcast::det {

/// Pairwise farm proximity used as an additive attention bias.
struct DisMatrix {
  std::size_t farms = 0;
  std::vector<double> values;  // row-major [farms, farms]
  double sd_km = 0.0;

  double operator()(std::size_t i, std::size_t j) const { return values[i * farms + j]; }
  nd::Tensor tensor() const { return nd::Tensor({farms, farms}, values); }
  /// Rows and columns reordered so that new index i is old index order[i].
  DisMatrix permuted(const std::vector<std::size_t>& order) const;
};

/// Dis_ij = exp(-(dist/SD)^2), 0 where dist == 0. SD is the population
/// standard deviation of the off-diagonal distances.
/// Needs >= 2 farms (ConfigError); all farms co-located -> DataError.
DisMatrix build_dis_matrix(const FarmCluster& farms);
DisMatrix dis_from_distances(std::size_t farms, const std::vector<double>& distances_km);

}  // namespace stormcast::det
