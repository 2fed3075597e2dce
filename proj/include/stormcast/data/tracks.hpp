#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "stormcast/core/types.hpp"

namespace stormcast::data {

inline constexpr double kKnotToMs = 0.514444;

struct IngestStats {
  std::size_t rows = 0;
  std::size_t skipped = 0;       // unparseable rows
  std::size_t duplicates = 0;    // same storm and timestamp, later row dropped
};

/// Reads a best-track CSV with columns SID, ISO_TIME, LAT, LON and one wind
/// column: WIND_MS (m/s), or USA_WIND / WMO_WIND (knots). A blank wind keeps
/// the point without intensity. One track per SID, points sorted by time.
std::vector<TyphoonTrack> ingest_tracks(const std::filesystem::path& path, const IntensityScale& scale,
                                        IngestStats* stats = nullptr);

/// Writes SID,ISO_TIME,LAT,LON,WIND_MS.
void write_tracks(const std::filesystem::path& path, const std::vector<TyphoonTrack>& tracks);

}  // namespace stormcast::data
