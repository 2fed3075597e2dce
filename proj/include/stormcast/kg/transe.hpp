#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "stormcast/core/types.hpp"
#include "stormcast/kg/vocabulary.hpp"
#include "stormcast/nd/tensor.hpp"

namespace stormcast::kg {

struct Triple {
  std::size_t h = 0, r = 0, t = 0;
  auto operator<=>(const Triple&) const = default;
};

struct TripleStats {
  std::size_t emitted = 0;
  std::size_t beyond_range = 0;
  std::size_t missing_intensity = 0;  // skipped points, counted once per point
};

/// One triple per (track point, farm) pair within 350 km.
std::vector<Triple> build_triples(const std::vector<TyphoonTrack>& tracks, const FarmCluster& farms,
                                  const EntityVocabulary& vocab, const IntensityScale& scale,
                                  TripleStats* stats = nullptr);

void write_triples_csv(const std::filesystem::path& path, const std::vector<Triple>& triples,
                       const EntityVocabulary& vocab);

struct EmbeddingTable {
  nd::Tensor entities;   // [N_e, d]
  nd::Tensor relations;  // [N_r, d]

  std::size_t dim() const { return entities.dim(1); }
  std::span<const double> entity(std::size_t id) const;
  std::span<const double> relation(std::size_t id) const;

  void save(const std::filesystem::path& stem) const;
  static EmbeddingTable load(const std::filesystem::path& stem);
};

/// Sum over the batch of [gamma + |h + r - t|^2 - |h' + r - t'|^2]_+.
nd::Tensor transe_loss(std::span<const Triple> batch, std::span<const Triple> corrupted, const EmbeddingTable& table,
                       double gamma);

/// |e_h + e_r - e_t|^2
double triple_distance(const EmbeddingTable& table, const Triple& x);

struct TransEConfig {
  std::size_t dim = 10;
  double gamma = 1.0;
  double lr = 0.01;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  std::size_t negatives = 1;  // corrupted samples drawn per training triple
  double held_out_fraction = 0.1;
  std::uint64_t seed = 7;
};

/// Entities a corrupted head or tail is drawn from.
struct CandidatePools {
  std::vector<std::size_t> heads;
  std::vector<std::size_t> tails;
};

struct TransEResult {
  EmbeddingTable table;
  std::vector<double> epoch_loss;  // mean training hinge per triple
  double held_out_initial = 0.0;   // mean held-out hinge at initialization
  double held_out_final = 0.0;
};

TransEResult train_embeddings(const std::vector<Triple>& triples, std::size_t num_entities,
                              std::size_t num_relations, const CandidatePools& pools, const TransEConfig& config);

/// Heads are corrupted from the head entities, tails from the farms.
TransEResult train_embeddings(const std::vector<Triple>& triples, const EntityVocabulary& vocab,
                              const TransEConfig& config);

/// Fraction of triples whose true tail ranks first among all pool tails.
double tail_hit_rate(const EmbeddingTable& table, const std::vector<Triple>& triples,
                     std::span<const std::size_t> tail_pool);

/// e_t - e_h for the point's head entity and the farm. Unseen heads fall back
/// to the nearest seen cell with the same grade and bump *fallbacks.
std::vector<double> condition_vector(const TrackPoint& point, std::size_t farm_index, const EntityVocabulary& vocab,
                                     const EmbeddingTable& table, const IntensityScale& scale,
                                     std::size_t* fallbacks = nullptr);

}  // namespace stormcast::kg
