#include "stormcast/data/series.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>

#include "stormcast/core/csv.hpp"
#include "stormcast/core/errors.hpp"

namespace stormcast::data {

void Series::resize(std::size_t n_farms, std::size_t n_steps) {
  farms = n_farms;
  steps = n_steps;
  power_mw.assign(n_farms * n_steps, 0.0);
  nwp.assign(n_farms * n_steps * kNwpFeatures, 0.0);
}

void PowerCurve::validate() const {
  if (!(cut_in_ms >= 0.0)) throw ConfigError("power curve: cut-in speed must be >= 0");
  if (!(rated_ms > cut_in_ms)) throw ConfigError("power curve: rated speed must exceed cut-in");
  if (!(cut_out_ms > rated_ms)) throw ConfigError("power curve: cut-out speed must exceed rated speed");
}

double PowerCurve::normalized(double v) const {
  if (!(v >= cut_in_ms) || v > cut_out_ms) return 0.0;
  if (v >= rated_ms) return 1.0;
  const double c3 = cut_in_ms * cut_in_ms * cut_in_ms;
  const double r3 = rated_ms * rated_ms * rated_ms;
  return std::clamp((v * v * v - c3) / (r3 - c3), 0.0, 1.0);
}

FarmCluster read_farms(const std::filesystem::path& path) {
  const auto table = csv::Table::read(path);
  const auto id = table.require("id"), lat = table.require("lat"), lon = table.require("lon"),
             cap = table.require("capacity_mw");
  std::vector<Farm> farms;
  for (const auto& row : table.rows()) {
    if (row.size() < table.header().size()) throw DataError("farms: short row in '" + path.string() + "'");
    auto la = csv::parse_double(row[lat]), lo = csv::parse_double(row[lon]), c = csv::parse_double(row[cap]);
    if (!la || !lo || !c) throw DataError("farms: unparseable row for '" + row[id] + "' in '" + path.string() + "'");
    farms.push_back(Farm{row[id], *la, *lo, *c});
  }
  if (farms.empty()) throw DataError("farms: no farms in '" + path.string() + "'");
  return FarmCluster(std::move(farms));
}

void write_farms(const std::filesystem::path& path, const FarmCluster& farms) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "id,lat,lon,capacity_mw\n";
  for (const auto& f : farms.farms()) {
    out << f.id << "," << csv::format_double(f.lat) << "," << csv::format_double(f.lon) << ","
        << csv::format_double(f.capacity_mw) << "\n";
  }
}

Series read_series(const std::filesystem::path& path, const FarmCluster& farms) {
  const auto table = csv::Table::read(path);
  const auto ts = table.require("timestamp"), fid = table.require("farm_id"), pw = table.require("power_mw");
  std::array<std::size_t, kNwpFeatures> cols{};
  for (std::size_t k = 0; k < kNwpFeatures; ++k) cols[k] = table.require(kNwpNames[k]);

  std::map<std::string, std::size_t> farm_index;
  for (std::size_t f = 0; f < farms.size(); ++f) farm_index[farms[f].id] = f;

  struct Row {
    TimePoint t;
    std::size_t farm;
    double power;
    std::array<double, kNwpFeatures> x;
  };
  std::vector<Row> rows;
  for (const auto& r : table.rows()) {
    if (r.size() < table.header().size()) throw DataError("series: short row in '" + path.string() + "'");
    auto it = farm_index.find(r[fid]);
    if (it == farm_index.end()) throw DataError("series: unknown farm id '" + r[fid] + "'");
    Row row{parse_iso8601(r[ts]), it->second, 0.0, {}};
    auto p = csv::parse_double(r[pw]);
    if (!p) throw DataError("series: unparseable power at " + r[ts] + " for farm '" + r[fid] + "'");
    row.power = *p;
    for (std::size_t k = 0; k < kNwpFeatures; ++k) {
      auto v = csv::parse_double(r[cols[k]]);
      if (!v) throw DataError(std::string("series: unparseable ") + kNwpNames[k] + " at " + r[ts]);
      row.x[k] = *v;
    }
    rows.push_back(row);
  }
  if (rows.empty()) throw DataError("series: no rows in '" + path.string() + "'");
  auto [lo, hi] = std::minmax_element(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
  const auto span = hi->t - lo->t;
  if (span % kStep != std::chrono::seconds(0)) throw DataError("series: timestamps are not on a 15-minute grid");
  Series s;
  s.start = lo->t;
  s.resize(farms.size(), static_cast<std::size_t>(span / kStep) + 1);
  std::vector<char> seen(s.farms * s.steps, 0);
  for (const auto& row : rows) {
    const auto off = row.t - s.start;
    if (off % kStep != std::chrono::seconds(0)) throw DataError("series: timestamp off the 15-minute grid");
    const auto step = static_cast<std::size_t>(off / kStep);
    if (seen[row.farm * s.steps + step]++) {
      throw DataError("series: duplicate row at " + format_iso8601(row.t) + " for farm '" + farms[row.farm].id + "'");
    }
    s.power(row.farm, step) = row.power;
    for (std::size_t k = 0; k < kNwpFeatures; ++k) s.feature(row.farm, step, k) = row.x[k];
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) {
      throw DataError("series: missing row at " + format_iso8601(s.time(i % s.steps)) + " for farm '" +
                      farms[i / s.steps].id + "'");
    }
  }
  return s;
}

void write_series(const std::filesystem::path& path, const Series& series, const FarmCluster& farms) {
  if (farms.size() != series.farms) throw DataError("series: farm count does not match registry");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "timestamp,farm_id,power_mw";
  for (const char* name : kNwpNames) out << "," << name;
  out << "\n";
  for (std::size_t s = 0; s < series.steps; ++s) {
    const std::string ts = format_iso8601(series.time(s));
    for (std::size_t f = 0; f < series.farms; ++f) {
      out << ts << "," << farms[f].id << "," << csv::format_double(series.power(f, s));
      for (std::size_t k = 0; k < kNwpFeatures; ++k) out << "," << csv::format_double(series.feature(f, s, k));
      out << "\n";
    }
  }
}

}  // namespace stormcast::data
