#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "stormcast/core/types.hpp"

namespace stormcast::kg {

inline constexpr double kImpactRadiusKm = 350.0;
inline constexpr double kBandWidthKm = 50.0;
/// Seven 50 km bands over (0, 350] plus one "no impact" band.
inline constexpr std::size_t kDistanceBands = 8;
inline constexpr std::size_t kRelations = kDistanceBands * kIntensityClasses;

/// 1..7 for d <= 350 km (d = 0 falls in band 1), 8 beyond.
std::size_t distance_band(double km);

struct GridCell {
  int lat_index = 0;
  int lon_index = 0;
  auto operator<=>(const GridCell&) const = default;
};

struct HeadKey {
  GridCell cell;
  Intensity intensity = Intensity::kTropicalDepression;
  auto operator<=>(const HeadKey&) const = default;
};

/// Entity and relation ids for the typhoon-path graph.
///
/// Entities [0, H) are (grid cell, intensity) heads, sorted by key;
/// entities [H, H + F) are the farms in cluster order.
/// Relation id = (band - 1) * 6 + intensity.
class EntityVocabulary {
 public:
  EntityVocabulary() = default;
  EntityVocabulary(double grid_deg, std::vector<HeadKey> heads, std::vector<std::string> farm_ids);

  /// Heads from every classified point of every track, including points far
  /// from all farms.
  static EntityVocabulary build(const std::vector<TyphoonTrack>& tracks, const FarmCluster& farms,
                                const IntensityScale& scale, double grid_deg = 0.5);

  double grid_deg() const { return grid_deg_; }
  GridCell cell_of(double lat, double lon) const;

  std::size_t num_heads() const { return heads_.size(); }
  std::size_t num_tails() const { return farm_ids_.size(); }
  std::size_t num_entities() const { return heads_.size() + farm_ids_.size(); }
  std::size_t num_relations() const { return kRelations; }

  std::optional<std::size_t> head_id(const HeadKey& key) const;
  /// Same intensity, closest cell centre by great-circle distance.
  std::optional<std::size_t> nearest_head(const HeadKey& key) const;
  std::size_t tail_id(std::size_t farm_index) const;
  static std::size_t relation_id(std::size_t band, Intensity c);

  const HeadKey& head(std::size_t id) const { return heads_.at(id); }
  std::string entity_label(std::size_t id) const;
  std::string relation_label(std::size_t id) const;
  const std::vector<std::string>& farm_ids() const { return farm_ids_; }

  /// kind,id,label rows plus a grid line; load() restores an identical vocabulary.
  void save(const std::filesystem::path& path) const;
  static EntityVocabulary load(const std::filesystem::path& path);

 private:
  double grid_deg_ = 0.5;
  std::vector<HeadKey> heads_;
  std::vector<std::string> farm_ids_;
  std::map<HeadKey, std::size_t> head_index_;
};

/// Parses labels produced by entity_label for heads ("cell:<i>:<j>|<grade>").
std::optional<HeadKey> parse_head_label(const std::string& label);

}  // namespace stormcast::kg
