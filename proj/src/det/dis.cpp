#include "stormcast/det/dis.hpp"

#include <cmath>

#include "stormcast/core/errors.hpp"

namespace stormcast::det {

DisMatrix DisMatrix::permuted(const std::vector<std::size_t>& order) const {
  if (order.size() != farms) throw ShapeError("DisMatrix::permuted: order length differs from farm count");
  DisMatrix out = *this;
  for (std::size_t i = 0; i < farms; ++i)
    for (std::size_t j = 0; j < farms; ++j) out.values[i * farms + j] = values[order[i] * farms + order[j]];
  return out;
}

DisMatrix dis_from_distances(std::size_t farms, const std::vector<double>& d) {
  if (farms < 2) throw ConfigError("Dis matrix needs at least 2 farms, got " + std::to_string(farms));
  if (d.size() != farms * farms) throw ShapeError("Dis matrix: distance table is not farms x farms");
  double sum = 0.0;
  const double n = static_cast<double>(farms * (farms - 1));
  for (std::size_t i = 0; i < farms; ++i)
    for (std::size_t j = 0; j < farms; ++j)
      if (i != j) sum += d[i * farms + j];
  const double mean = sum / n;
  double var = 0.0;
  for (std::size_t i = 0; i < farms; ++i)
    for (std::size_t j = 0; j < farms; ++j)
      if (i != j) var += (d[i * farms + j] - mean) * (d[i * farms + j] - mean);
  DisMatrix out;
  out.farms = farms;
  out.sd_km = std::sqrt(var / n);
  if (!(mean > 0.0)) throw DataError("Dis matrix: all farms are co-located");
  out.values.assign(farms * farms, 0.0);
  // Equidistant farms: SD -> 0 sends every entry to its limit, 0.
  if (!(out.sd_km > 0.0)) return out;
  for (std::size_t i = 0; i < farms; ++i) {
    for (std::size_t j = 0; j < farms; ++j) {
      const double dist = d[i * farms + j];
      if (dist != 0.0) out.values[i * farms + j] = std::exp(-(dist / out.sd_km) * (dist / out.sd_km));
    }
  }
  return out;
}

DisMatrix build_dis_matrix(const FarmCluster& farms) {
  const std::size_t F = farms.size();
  if (F < 2) throw ConfigError("Dis matrix needs at least 2 farms, got " + std::to_string(F));
  std::vector<double> d(F * F);
  for (std::size_t i = 0; i < F; ++i)
    for (std::size_t j = 0; j < F; ++j) d[i * F + j] = farms.distance_km(i, j);
  return dis_from_distances(F, d);
}

}  // namespace stormcast::det
