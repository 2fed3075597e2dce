#pragma once

namespace stormcast {

inline constexpr double kEarthRadiusKm = 6371.0088;

/// Great-circle distance in km between two lat/lon points given in degrees.
double haversine_km(double lat1, double lon1, double lat2, double lon2);

/// Wraps a longitude into [-180, 180].
double wrap_longitude(double lon);

}  // namespace stormcast
