#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "stormcast/core/time.hpp"
#include "stormcast/core/types.hpp"

namespace stormcast::data {

inline constexpr std::size_t kNwpFeatures = 4;
inline constexpr std::array<const char*, kNwpFeatures> kNwpNames = {"wind_speed", "humidity", "pressure",
                                                                   "temperature"};
inline constexpr std::chrono::minutes kStep{15};

/// Regular 15-minute power and NWP series for every farm of a cluster.
struct Series {
  TimePoint start;
  std::size_t steps = 0;
  std::size_t farms = 0;
  std::vector<double> power_mw;  // [farm][step]
  std::vector<double> nwp;       // [farm][step][feature]

  TimePoint time(std::size_t step) const { return start + kStep * static_cast<long>(step); }
  double& power(std::size_t f, std::size_t s) { return power_mw[f * steps + s]; }
  double power(std::size_t f, std::size_t s) const { return power_mw[f * steps + s]; }
  double& feature(std::size_t f, std::size_t s, std::size_t k) { return nwp[(f * steps + s) * kNwpFeatures + k]; }
  double feature(std::size_t f, std::size_t s, std::size_t k) const {
    return nwp[(f * steps + s) * kNwpFeatures + k];
  }
  void resize(std::size_t n_farms, std::size_t n_steps);
};

/// Piecewise turbine curve: zero below cut-in, cubic ramp to rated, flat to
/// cut-out, zero (shutdown) above cut-out.
struct PowerCurve {
  double cut_in_ms = 3.0;
  double rated_ms = 12.0;
  double cut_out_ms = 25.0;

  /// Throws ConfigError unless 0 <= cut_in < rated < cut_out.
  void validate() const;
  /// Output as a fraction of capacity.
  double normalized(double wind_ms) const;
};

/// Farm registry CSV: id,lat,lon,capacity_mw
FarmCluster read_farms(const std::filesystem::path& path);
void write_farms(const std::filesystem::path& path, const FarmCluster& farms);

/// Series CSV: timestamp,farm_id,power_mw,wind_speed,humidity,pressure,temperature.
/// Rows may come in any order but must cover a complete 15-minute grid for
/// every registered farm.
Series read_series(const std::filesystem::path& path, const FarmCluster& farms);
void write_series(const std::filesystem::path& path, const Series& series, const FarmCluster& farms);

}  // namespace stormcast::data
