#include "stormcast/data/tracks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "stormcast/core/csv.hpp"
#include "stormcast/core/errors.hpp"
#include "stormcast/core/geo.hpp"

namespace stormcast::data {

std::vector<TyphoonTrack> ingest_tracks(const std::filesystem::path& path, const IntensityScale& scale,
                                        IngestStats* stats) {
  const auto table = csv::Table::read(path);
  const auto sid = table.require("SID"), iso = table.require("ISO_TIME"), lat = table.require("LAT"),
             lon = table.require("LON");
  std::size_t wind = 0;
  double to_ms = 1.0;
  if (auto c = table.find("WIND_MS")) {
    wind = *c;
  } else if (auto c = table.find("USA_WIND")) {
    wind = *c;
    to_ms = kKnotToMs;
  } else if (auto c = table.find("WMO_WIND")) {
    wind = *c;
    to_ms = kKnotToMs;
  } else {
    throw DataError("'" + path.string() + "' is missing required column 'WIND_MS' (or USA_WIND/WMO_WIND)");
  }

  IngestStats local;
  std::map<std::string, std::vector<TrackPoint>> by_storm;
  for (const auto& row : table.rows()) {
    ++local.rows;
    if (row.size() <= std::max({sid, iso, lat, lon, wind}) || row[sid].empty()) {
      ++local.skipped;
      continue;
    }
    TrackPoint p;
    try {
      p.time = parse_iso8601(row[iso]);
    } catch (const DataError&) {
      ++local.skipped;
      continue;
    }
    auto la = csv::parse_double(row[lat]), lo = csv::parse_double(row[lon]);
    if (!la || !lo || std::abs(*la) > 90.0) {
      ++local.skipped;
      continue;
    }
    p.lat = *la;
    p.lon = wrap_longitude(*lo);
    if (!row[wind].empty()) {
      auto w = csv::parse_double(row[wind]);
      if (!w || *w < 0.0) {
        ++local.skipped;
        continue;
      }
      p.max_wind_ms = *w * to_ms;
      p.intensity = scale.classify(*p.max_wind_ms);
    }
    by_storm[row[sid]].push_back(p);
  }

  std::vector<TyphoonTrack> tracks;
  for (auto& [id, pts] : by_storm) {
    std::stable_sort(pts.begin(), pts.end(), [](const TrackPoint& a, const TrackPoint& b) { return a.time < b.time; });
    const auto before = pts.size();
    pts.erase(std::unique(pts.begin(), pts.end(), [](const TrackPoint& a, const TrackPoint& b) { return a.time == b.time; }),
              pts.end());
    local.duplicates += before - pts.size();
    tracks.push_back(TyphoonTrack{id, std::move(pts)});
  }
  if (stats) *stats = local;
  return tracks;
}

void write_tracks(const std::filesystem::path& path, const std::vector<TyphoonTrack>& tracks) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "SID,ISO_TIME,LAT,LON,WIND_MS\n";
  for (const auto& t : tracks) {
    for (const auto& p : t.points) {
      out << t.storm_id << "," << format_iso8601(p.time) << "," << csv::format_double(p.lat) << ","
          << csv::format_double(p.lon) << "," << (p.max_wind_ms ? csv::format_double(*p.max_wind_ms) : "") << "\n";
    }
  }
}

}  // namespace stormcast::data
