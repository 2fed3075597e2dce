#include "stormcast/core/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace stormcast {

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * deg;
  const double dlon = (lon2 - lon1) * deg;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * deg) * std::cos(lat2 * deg) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

double wrap_longitude(double lon) {
  double w = std::fmod(lon + 180.0, 360.0);
  if (w < 0) w += 360.0;
  w -= 180.0;
  // fmod maps +180 to -180; keep the caller's sign on the seam
  if (w == -180.0 && lon > 0) w = 180.0;
  return w;
}

}  // namespace stormcast
