#include "stormcast/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>

#include "stormcast/core/errors.hpp"
#include "stormcast/core/geo.hpp"
#include "stormcast/nd/random.hpp"

namespace stormcast::data {

namespace {

constexpr std::chrono::hours kTrackInterval{3};

struct Storm {
  TyphoonTrack track;
  double rmax_km = 40.0;
};

double storm_wind(double s, double peak) {
  constexpr double kGenesis = 13.0;
  if (s <= 1.0) return kGenesis + (peak - kGenesis) * std::sin(std::numbers::pi * s / 1.6);
  const double at_landfall = kGenesis + (peak - kGenesis) * std::sin(std::numbers::pi / 1.6);
  return std::max(10.0, at_landfall * std::exp(-6.0 * (s - 1.0)));
}

Storm make_storm(std::size_t index, TimePoint centre, const std::vector<Farm>& farms, double landfall_fraction,
                 nd::Rng& rng) {
  const double lifetime_h = rng.uniform(96.0, 144.0);
  const double g_lat = rng.uniform(12.0, 17.0), g_lon = rng.uniform(124.0, 132.0);
  double p_lat, p_lon;
  if (rng.uniform() < landfall_fraction) {
    const Farm& f = farms[rng.index(farms.size())];
    p_lat = f.lat + rng.uniform(-0.3, 0.8);
    p_lon = f.lon + rng.uniform(-0.8, 0.8);
  } else {
    p_lat = rng.uniform(25.0, 30.0);
    p_lon = rng.uniform(120.0, 126.0);
  }
  const double bend = rng.uniform(-3.0, 3.0);
  const double peak = rng.uniform(30.0, 60.0);

  Storm storm;
  storm.rmax_km = rng.uniform(25.0, 60.0);
  storm.track.storm_id = "SYN" + std::to_string(index + 1);
  // s = 1 at landfall, which falls at `centre`; the track runs on to s = 1.25.
  const auto genesis = centre - std::chrono::seconds(static_cast<long>(lifetime_h * 3600.0));
  const std::size_t n_points = static_cast<std::size_t>(1.25 * lifetime_h / 3.0) + 1;
  for (std::size_t k = 0; k < n_points; ++k) {
    const double s = static_cast<double>(k) * 3.0 / lifetime_h;
    TrackPoint p;
    p.time = std::chrono::floor<std::chrono::seconds>(genesis) + kTrackInterval * static_cast<long>(k);
    p.lat = g_lat + (p_lat - g_lat) * s + bend * s * (1.0 - s);
    p.lon = wrap_longitude(g_lon + (p_lon - g_lon) * s);
    p.max_wind_ms = storm_wind(s, peak);
    storm.track.points.push_back(p);
  }
  return storm;
}

// Stationary AR(1) with unit marginal variance.
void ar1(std::span<double> out, double phi, nd::Rng& rng) {
  const double innov = std::sqrt(1.0 - phi * phi);
  double x = rng.normal();
  for (auto& v : out) {
    x = phi * x + innov * rng.normal();
    v = x;
  }
}

}  // namespace

std::vector<Farm> default_farms() {
  const double caps[9] = {400, 300, 350, 250, 500, 300, 295, 300, 300};
  std::vector<Farm> farms;
  for (int f = 0; f < 9; ++f) {
    const double frac = f / 8.0;
    farms.push_back(Farm{"WF" + std::to_string(f + 1), 20.85 + 2.5 * frac + 0.1 * std::sin(1.7 * f),
                         110.5 + 7.0 * frac, caps[f]});
  }
  return farms;
}

double vortex_wind(double r_km, double vmax_ms, double rmax_km) {
  if (r_km < 0.0 || rmax_km <= 0.0) throw std::invalid_argument("vortex_wind: radius must be non-negative");
  const double x = r_km / rmax_km;
  return vmax_ms * x * std::exp(1.0 - x);
}

Scenario synth_scenario(std::uint64_t seed, const SynthConfig& config) {
  config.curve.validate();
  if (config.farms.empty()) throw ConfigError("synth: at least one farm is required");
  if (config.end <= config.start) throw ConfigError("synth: end must be after start");
  if (config.nwp_smoothing_steps < 1) throw ConfigError("synth: nwp_smoothing_steps must be >= 1");

  Scenario sc;
  sc.farms = FarmCluster(config.farms);
  const std::size_t n_farms = config.farms.size();
  const auto steps = static_cast<std::size_t>((config.end - config.start) / kStep);
  if (steps < 2) throw ConfigError("synth: date range shorter than two steps");
  sc.series.start = config.start;
  sc.series.resize(n_farms, steps);

  nd::Rng track_rng(seed, 1), wind_rng(seed, 2), nwp_rng(seed, 3);
  std::vector<Storm> storms;
  const auto duration = config.end - config.start;
  for (std::size_t i = 0; i < config.storm_count; ++i) {
    const auto centre = config.start + std::chrono::duration_cast<std::chrono::seconds>(
                                           duration * ((static_cast<double>(i) + 0.5) / config.storm_count));
    storms.push_back(make_storm(i, std::chrono::floor<std::chrono::seconds>(centre), config.farms,
                                config.landfall_fraction, track_rng));
    sc.tracks.push_back(storms.back().track);
  }

  // Storm footprint per farm and step: full vortex, and distance to the nearest centre.
  const IntensityScale scale;
  std::vector<double> vortex(n_farms * steps, 0.0), pressure_drop(n_farms * steps, 0.0),
      proximity(n_farms * steps, 0.0);
  for (const auto& storm : storms) {
    const auto& pts = storm.track.points;
    for (std::size_t s = 0; s < steps; ++s) {
      const TimePoint t = sc.series.time(s);
      if (t < pts.front().time || t > pts.back().time) continue;
      auto p = storm.track.at(t, scale);
      for (std::size_t f = 0; f < n_farms; ++f) {
        const double r = haversine_km(p->lat, p->lon, config.farms[f].lat, config.farms[f].lon);
        const std::size_t i = f * steps + s;
        vortex[i] = std::max(vortex[i], vortex_wind(r, *p->max_wind_ms, storm.rmax_km));
        pressure_drop[i] = std::max(pressure_drop[i], 0.9 * *p->max_wind_ms * std::exp(-r / (3.0 * storm.rmax_km)));
        proximity[i] = std::max(proximity[i], std::exp(-r / 300.0));
      }
    }
  }

  std::vector<double> common(steps), own(steps);
  ar1(common, 0.995, wind_rng);
  sc.true_wind_ms.assign(n_farms * steps, 0.0);
  const std::size_t w = config.nwp_smoothing_steps;
  for (std::size_t f = 0; f < n_farms; ++f) {
    ar1(own, 0.99, wind_rng);
    std::vector<double> background(steps);
    for (std::size_t s = 0; s < steps; ++s) {
      const double hour = static_cast<double>(s % 96) / 4.0;
      const double diurnal = std::sin(2.0 * std::numbers::pi * (hour - 9.0) / 24.0);
      background[s] = std::max(0.3, config.background_mean_ms + diurnal +
                                        config.background_sd_ms * (0.8 * common[s] + 0.6 * own[s]));
    }
    const double cap = config.farms[f].capacity_mw;
    double window_sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t i = f * steps + s;
      const double truth = background[s] + vortex[i];
      sc.true_wind_ms[i] = truth;
      const double noise = 1.0 + 0.02 * wind_rng.normal();
      sc.series.power(f, s) = std::clamp(cap * config.curve.normalized(truth) * noise, 0.0, cap);

      // trailing moving average of the background as the NWP's large-scale wind
      window_sum += background[s];
      if (s >= w) window_sum -= background[s - w];
      const double smooth = window_sum / static_cast<double>(std::min(s + 1, w));
      const double hour = static_cast<double>(s % 96) / 4.0;
      const double day = static_cast<double>(s) / 96.0;
      sc.series.feature(f, s, 0) = std::max(
          0.0, smooth + config.nwp_vortex_fraction * vortex[i] + config.nwp_error_sd_ms * nwp_rng.normal());
      sc.series.feature(f, s, 1) = std::clamp(
          76.0 + 6.0 * std::sin(2.0 * std::numbers::pi * day / 45.0) + 12.0 * proximity[i] + 3.0 * nwp_rng.normal(),
          20.0, 100.0);
      sc.series.feature(f, s, 2) = 1008.0 - 2.0 * std::sin(2.0 * std::numbers::pi * day / 60.0) -
                                   config.nwp_vortex_fraction * pressure_drop[i] + 1.5 * nwp_rng.normal();
      sc.series.feature(f, s, 3) = 28.0 + 1.5 * std::sin(2.0 * std::numbers::pi * (hour - 9.0) / 24.0) -
                                   2.0 * proximity[i] + 0.7 * nwp_rng.normal();
    }
  }
  return sc;
}

}  // namespace stormcast::data
