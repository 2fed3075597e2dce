#include "stormcast/kg/vocabulary.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "stormcast/core/csv.hpp"
#include "stormcast/core/errors.hpp"
#include "stormcast/core/geo.hpp"

namespace stormcast::kg {

namespace {

std::optional<Intensity> grade_of(const TrackPoint& p, const IntensityScale& scale) {
  if (p.intensity) return p.intensity;
  if (p.max_wind_ms) return scale.classify(*p.max_wind_ms);
  return std::nullopt;
}

std::optional<Intensity> parse_grade(const std::string& code) {
  for (int c = 0; c < kIntensityClasses; ++c) {
    if (code == intensity_code(static_cast<Intensity>(c))) return static_cast<Intensity>(c);
  }
  return std::nullopt;
}

}  // namespace

std::size_t distance_band(double km) {
  if (!(km >= 0.0)) throw std::invalid_argument("distance_band: negative or NaN distance");
  if (km > kImpactRadiusKm) return kDistanceBands;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(km / kBandWidthKm)));
}

EntityVocabulary::EntityVocabulary(double grid_deg, std::vector<HeadKey> heads, std::vector<std::string> farm_ids)
    : grid_deg_(grid_deg), heads_(std::move(heads)), farm_ids_(std::move(farm_ids)) {
  if (!(grid_deg_ > 0.0)) throw ConfigError("vocabulary: grid step must be positive");
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    if (!head_index_.emplace(heads_[i], i).second) throw DataError("vocabulary: duplicate head entity");
  }
  std::set<std::string> seen;
  for (const auto& id : farm_ids_) {
    if (!seen.insert(id).second) throw DataError("vocabulary: duplicate farm id '" + id + "'");
  }
}

EntityVocabulary EntityVocabulary::build(const std::vector<TyphoonTrack>& tracks, const FarmCluster& farms,
                                         const IntensityScale& scale, double grid_deg) {
  EntityVocabulary probe(grid_deg, {}, {});
  std::set<HeadKey> keys;
  for (const auto& track : tracks) {
    for (const auto& p : track.points) {
      auto g = grade_of(p, scale);
      if (!g) continue;
      keys.insert(HeadKey{probe.cell_of(p.lat, p.lon), *g});
    }
  }
  return EntityVocabulary(grid_deg, std::vector<HeadKey>(keys.begin(), keys.end()), farms.ids());
}

GridCell EntityVocabulary::cell_of(double lat, double lon) const {
  return GridCell{static_cast<int>(std::floor(lat / grid_deg_)),
                  static_cast<int>(std::floor(wrap_longitude(lon) / grid_deg_))};
}

std::optional<std::size_t> EntityVocabulary::head_id(const HeadKey& key) const {
  auto it = head_index_.find(key);
  if (it == head_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> EntityVocabulary::nearest_head(const HeadKey& key) const {
  if (auto exact = head_id(key)) return exact;
  const double lat0 = (key.cell.lat_index + 0.5) * grid_deg_;
  const double lon0 = (key.cell.lon_index + 0.5) * grid_deg_;
  std::optional<std::size_t> best;
  double best_km = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    if (heads_[i].intensity != key.intensity) continue;
    const double km = haversine_km(lat0, lon0, (heads_[i].cell.lat_index + 0.5) * grid_deg_,
                                   (heads_[i].cell.lon_index + 0.5) * grid_deg_);
    if (km < best_km) {
      best_km = km;
      best = i;
    }
  }
  return best;
}

std::size_t EntityVocabulary::tail_id(std::size_t farm_index) const {
  if (farm_index >= farm_ids_.size()) throw std::out_of_range("vocabulary: farm index out of range");
  return heads_.size() + farm_index;
}

std::size_t EntityVocabulary::relation_id(std::size_t band, Intensity c) {
  if (band < 1 || band > kDistanceBands) throw std::out_of_range("vocabulary: distance band out of range");
  return (band - 1) * kIntensityClasses + static_cast<std::size_t>(c);
}

std::string EntityVocabulary::entity_label(std::size_t id) const {
  if (id < heads_.size()) {
    const auto& h = heads_[id];
    return "cell:" + std::to_string(h.cell.lat_index) + ":" + std::to_string(h.cell.lon_index) + "|" +
           intensity_code(h.intensity);
  }
  return "farm:" + farm_ids_.at(id - heads_.size());
}

std::string EntityVocabulary::relation_label(std::size_t id) const {
  if (id >= kRelations) throw std::out_of_range("vocabulary: relation id out of range");
  const std::size_t band = id / kIntensityClasses + 1;
  const auto grade = static_cast<Intensity>(id % kIntensityClasses);
  const std::string range = band == kDistanceBands
                                ? std::string(">350km")
                                : std::to_string((band - 1) * 50) + "-" + std::to_string(band * 50) + "km";
  return "band" + std::to_string(band) + ":" + range + "|" + intensity_code(grade);
}

std::optional<HeadKey> parse_head_label(const std::string& label) {
  if (label.rfind("cell:", 0) != 0) return std::nullopt;
  const auto comma = label.find(':', 5);
  const auto bar = label.find('|');
  if (comma == std::string::npos || bar == std::string::npos || bar < comma) return std::nullopt;
  try {
    HeadKey k;
    k.cell.lat_index = std::stoi(label.substr(5, comma - 5));
    k.cell.lon_index = std::stoi(label.substr(comma + 1, bar - comma - 1));
    auto g = parse_grade(label.substr(bar + 1));
    if (!g) return std::nullopt;
    k.intensity = *g;
    return k;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void EntityVocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("vocabulary: cannot write '" + path.string() + "'");
  out << "kind,id,label\n";
  out << "grid,0," << csv::format_double(grid_deg_) << "\n";
  for (std::size_t i = 0; i < num_entities(); ++i) out << (i < heads_.size() ? "head," : "tail,") << i << ","
                                                      << entity_label(i) << "\n";
  for (std::size_t r = 0; r < kRelations; ++r) out << "relation," << r << "," << relation_label(r) << "\n";
}

EntityVocabulary EntityVocabulary::load(const std::filesystem::path& path) {
  const auto table = csv::Table::read(path);
  const auto kind = table.require("kind"), label = table.require("label");
  double grid = 0.5;
  std::vector<HeadKey> heads;
  std::vector<std::string> farms;
  for (const auto& row : table.rows()) {
    if (row.size() <= std::max(kind, label)) throw DataError("vocabulary: short row in '" + path.string() + "'");
    const auto& k = row[kind];
    if (k == "grid") {
      auto g = csv::parse_double(row[label]);
      if (!g) throw DataError("vocabulary: bad grid step in '" + path.string() + "'");
      grid = *g;
    } else if (k == "head") {
      auto h = parse_head_label(row[label]);
      if (!h) throw DataError("vocabulary: bad head label '" + row[label] + "'");
      heads.push_back(*h);
    } else if (k == "tail") {
      if (row[label].rfind("farm:", 0) != 0) throw DataError("vocabulary: bad tail label '" + row[label] + "'");
      farms.push_back(row[label].substr(5));
    }
  }
  return EntityVocabulary(grid, std::move(heads), std::move(farms));
}

}  // namespace stormcast::kg
