#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "stormcast/core/time.hpp"

namespace stormcast {

/// Tropical-cyclone intensity grades, weakest to strongest.
enum class Intensity : int {
  kTropicalDepression = 0,
  kTropicalStorm = 1,
  kSevereTropicalStorm = 2,
  kTyphoon = 3,
  kSevereTyphoon = 4,
  kSuperTyphoon = 5,
};
inline constexpr int kIntensityClasses = 6;

const char* intensity_code(Intensity c);

/// Maximum-sustained-wind thresholds (m/s) separating the six grades.
struct IntensityScale {
  double thresholds_ms[5] = {17.2, 24.5, 32.7, 41.5, 51.0};

  Intensity classify(double max_wind_ms) const;
};

struct TrackPoint {
  TimePoint time;
  double lat = 0.0;
  double lon = 0.0;
  std::optional<double> max_wind_ms;
  std::optional<Intensity> intensity;
};

/// One storm. Points are strictly increasing in time.
struct TyphoonTrack {
  std::string storm_id;
  std::vector<TrackPoint> points;

  /// Linear interpolation of position and wind between bracketing points.
  /// Empty outside [first, last] point time.
  std::optional<TrackPoint> at(TimePoint t, const IntensityScale& scale) const;
};

struct Farm {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
  double capacity_mw = 0.0;
};

/// Farms plus their symmetric great-circle distance matrix.
class FarmCluster {
 public:
  FarmCluster() = default;
  explicit FarmCluster(std::vector<Farm> farms);

  const std::vector<Farm>& farms() const { return farms_; }
  const Farm& operator[](std::size_t i) const { return farms_[i]; }
  std::size_t size() const { return farms_.size(); }
  double distance_km(std::size_t i, std::size_t j) const { return distances_[i * farms_.size() + j]; }
  double total_capacity_mw() const;
  std::vector<std::string> ids() const;

 private:
  std::vector<Farm> farms_;
  std::vector<double> distances_;
};

}  // namespace stormcast
