#include "stormcast/core/types.hpp"

#include <algorithm>
#include <cmath>

#include "stormcast/core/errors.hpp"
#include "stormcast/core/geo.hpp"

namespace stormcast {

const char* intensity_code(Intensity c) {
  switch (c) {
    case Intensity::kTropicalDepression: return "TD";
    case Intensity::kTropicalStorm: return "TS";
    case Intensity::kSevereTropicalStorm: return "STS";
    case Intensity::kTyphoon: return "TY";
    case Intensity::kSevereTyphoon: return "STY";
    case Intensity::kSuperTyphoon: return "SuperTY";
  }
  return "?";
}

Intensity IntensityScale::classify(double max_wind_ms) const {
  int cls = 0;
  for (double t : thresholds_ms) {
    if (max_wind_ms >= t) ++cls;
  }
  return static_cast<Intensity>(cls);
}

std::optional<TrackPoint> TyphoonTrack::at(TimePoint t, const IntensityScale& scale) const {
  if (points.empty() || t < points.front().time || t > points.back().time) return std::nullopt;
  auto it = std::lower_bound(points.begin(), points.end(), t,
                             [](const TrackPoint& p, TimePoint v) { return p.time < v; });
  if (it->time == t) {
    TrackPoint p = *it;
    if (!p.intensity && p.max_wind_ms) p.intensity = scale.classify(*p.max_wind_ms);
    return p;
  }
  const TrackPoint& b = *it;
  const TrackPoint& a = *(it - 1);
  const double w = static_cast<double>((t - a.time).count()) / static_cast<double>((b.time - a.time).count());
  TrackPoint p;
  p.time = t;
  p.lat = a.lat + w * (b.lat - a.lat);
  double dlon = b.lon - a.lon;
  if (dlon > 180.0) dlon -= 360.0;
  if (dlon < -180.0) dlon += 360.0;
  p.lon = wrap_longitude(a.lon + w * dlon);
  if (a.max_wind_ms && b.max_wind_ms) {
    p.max_wind_ms = *a.max_wind_ms + w * (*b.max_wind_ms - *a.max_wind_ms);
    p.intensity = scale.classify(*p.max_wind_ms);
  } else {
    // fall back to the nearer endpoint's grade when winds are missing
    const TrackPoint& near = w < 0.5 ? a : b;
    p.intensity = near.intensity;
  }
  return p;
}

FarmCluster::FarmCluster(std::vector<Farm> farms) : farms_(std::move(farms)) {
  const std::size_t n = farms_.size();
  distances_.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Farm& f = farms_[i];
    if (std::abs(f.lat) > 90.0) throw DataError("farm '" + f.id + "' latitude out of range");
    if (std::abs(f.lon) > 180.0) throw DataError("farm '" + f.id + "' longitude out of range");
    if (!(f.capacity_mw > 0.0)) throw DataError("farm '" + f.id + "' capacity must be positive");
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = haversine_km(f.lat, f.lon, farms_[j].lat, farms_[j].lon);
      distances_[i * n + j] = d;
      distances_[j * n + i] = d;
    }
  }
}

double FarmCluster::total_capacity_mw() const {
  double total = 0.0;
  for (const auto& f : farms_) total += f.capacity_mw;
  return total;
}

std::vector<std::string> FarmCluster::ids() const {
  std::vector<std::string> out;
  out.reserve(farms_.size());
  for (const auto& f : farms_) out.push_back(f.id);
  return out;
}

}  // namespace stormcast
