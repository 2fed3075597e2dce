#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "stormcast/core/types.hpp"
#include "stormcast/data/series.hpp"

namespace stormcast::data {

/// Nine offshore farms, 2995 MW in total, spread along ~770 km of coast.
std::vector<Farm> default_farms();

struct SynthConfig {
  std::vector<Farm> farms = default_farms();
  TimePoint start = parse_iso8601("2024-05-01T00:00:00Z");
  TimePoint end = parse_iso8601("2024-11-01T00:00:00Z");
  std::size_t storm_count = 12;
  /// Fraction of storms steered to make landfall within the farm region.
  double landfall_fraction = 0.75;
  PowerCurve curve;
  double background_mean_ms = 7.5;
  double background_sd_ms = 2.5;
  /// Share of the storm vortex that the NWP wind reproduces.
  double nwp_vortex_fraction = 0.5;
  double nwp_error_sd_ms = 1.0;
  std::size_t nwp_smoothing_steps = 8;
};

/// Truth wind at one farm from one storm: v(r) = vmax (r/rm) exp(1 - r/rm).
double vortex_wind(double r_km, double vmax_ms, double rmax_km);

struct Scenario {
  FarmCluster farms;
  std::vector<TyphoonTrack> tracks;
  Series series;
  std::vector<double> true_wind_ms;  // [farm][step]
};

/// Deterministic in (seed, config).
Scenario synth_scenario(std::uint64_t seed, const SynthConfig& config);

}  // namespace stormcast::data
