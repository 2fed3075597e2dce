#include "stormcast/kg/transe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "stormcast/core/errors.hpp"
#include "stormcast/core/geo.hpp"
#include "stormcast/nd/adam.hpp"
#include "stormcast/nd/checkpoint.hpp"
#include "stormcast/nd/ops.hpp"
#include "stormcast/nd/random.hpp"

namespace stormcast::kg {

namespace {

std::optional<Intensity> grade_of(const TrackPoint& p, const IntensityScale& scale) {
  if (p.intensity) return p.intensity;
  if (p.max_wind_ms) return scale.classify(*p.max_wind_ms);
  return std::nullopt;
}

nd::Tensor uniform_table(std::size_t rows, std::size_t dim, nd::Rng& rng) {
  const double bound = 6.0 / std::sqrt(static_cast<double>(dim));
  std::vector<double> v(rows * dim);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return nd::Tensor({rows, dim}, std::move(v));
}

// Rows already on the unit sphere are left bit-identical.
void normalize_rows(nd::Tensor& t) {
  const std::size_t dim = t.dim(1);
  auto v = t.mutable_values();
  for (std::size_t r = 0; r < t.dim(0); ++r) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < dim; ++j) n2 += v[r * dim + j] * v[r * dim + j];
    if (n2 == 0.0 || std::abs(n2 - 1.0) < 1e-12) continue;
    const double inv = 1.0 / std::sqrt(n2);
    for (std::size_t j = 0; j < dim; ++j) v[r * dim + j] *= inv;
  }
}

Triple corrupt(const Triple& x, const CandidatePools& pools, const std::set<Triple>& known, nd::Rng& rng) {
  Triple c = x;
  for (int attempt = 0; attempt < 32; ++attempt) {
    c = x;
    const bool head = pools.tails.size() < 2 || (pools.heads.size() >= 2 && rng.uniform() < 0.5);
    if (head) {
      c.h = pools.heads[rng.index(pools.heads.size())];
    } else {
      c.t = pools.tails[rng.index(pools.tails.size())];
    }
    if (c != x && !known.contains(c)) return c;
  }
  return c;
}

double mean_hinge(const std::vector<Triple>& pos, const std::vector<Triple>& neg, const EmbeddingTable& table,
                  double gamma) {
  if (pos.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    s += std::max(0.0, gamma + triple_distance(table, pos[i]) - triple_distance(table, neg[i]));
  }
  return s / static_cast<double>(pos.size());
}

}  // namespace

std::vector<Triple> build_triples(const std::vector<TyphoonTrack>& tracks, const FarmCluster& farms,
                                  const EntityVocabulary& vocab, const IntensityScale& scale, TripleStats* stats) {
  if (tracks.empty()) throw DataError("build_triples: no tracks");
  TripleStats local;
  std::vector<Triple> out;
  for (const auto& track : tracks) {
    for (const auto& p : track.points) {
      auto grade = grade_of(p, scale);
      if (!grade) {
        ++local.missing_intensity;
        continue;
      }
      auto head = vocab.head_id(HeadKey{vocab.cell_of(p.lat, p.lon), *grade});
      if (!head) throw DataError("build_triples: track point of '" + track.storm_id + "' is not in the vocabulary");
      for (std::size_t f = 0; f < farms.size(); ++f) {
        const double km = haversine_km(p.lat, p.lon, farms[f].lat, farms[f].lon);
        const std::size_t band = distance_band(km);
        if (band == kDistanceBands) {
          ++local.beyond_range;
          continue;
        }
        out.push_back(Triple{*head, EntityVocabulary::relation_id(band, *grade), vocab.tail_id(f)});
      }
    }
  }
  local.emitted = out.size();
  if (stats) *stats = local;
  return out;
}

void write_triples_csv(const std::filesystem::path& path, const std::vector<Triple>& triples,
                       const EntityVocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "head_label,relation_label,tail_label\n";
  for (const auto& x : triples) {
    out << vocab.entity_label(x.h) << "," << vocab.relation_label(x.r) << "," << vocab.entity_label(x.t) << "\n";
  }
}

std::span<const double> EmbeddingTable::entity(std::size_t id) const {
  return entities.values().subspan(id * dim(), dim());
}

std::span<const double> EmbeddingTable::relation(std::size_t id) const {
  return relations.values().subspan(id * dim(), dim());
}

void EmbeddingTable::save(const std::filesystem::path& stem) const {
  nd::save_checkpoint(stem, {{"entities", entities}, {"relations", relations}});
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& stem) {
  EmbeddingTable t;
  for (auto& [name, tensor] : nd::load_checkpoint(stem)) {
    if (name == "entities") t.entities = tensor;
    if (name == "relations") t.relations = tensor;
  }
  if (!t.entities.defined() || !t.relations.defined() || t.entities.rank() != 2 ||
      t.relations.rank() != 2 || t.entities.dim(1) != t.relations.dim(1)) {
    throw DataError("embedding checkpoint '" + stem.string() + "' is incomplete");
  }
  return t;
}

double triple_distance(const EmbeddingTable& table, const Triple& x) {
  const auto h = table.entity(x.h), r = table.relation(x.r), t = table.entity(x.t);
  double s = 0.0;
  for (std::size_t j = 0; j < h.size(); ++j) {
    const double d = h[j] + r[j] - t[j];
    s += d * d;
  }
  return s;
}

nd::Tensor transe_loss(std::span<const Triple> batch, std::span<const Triple> corrupted, const EmbeddingTable& table,
                       double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("transe: margin gamma must be positive");
  if (batch.size() != corrupted.size() || batch.empty()) {
    throw std::invalid_argument("transe: batch and corrupted lists must be non-empty and equal in length");
  }
  std::vector<std::size_t> h, r, t, h2, t2;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto &p = batch[i], &n = corrupted[i];
    if (p.r != n.r || ((p.h != n.h) == (p.t != n.t))) {
      throw std::invalid_argument("transe: corrupted triple must differ in exactly one of head or tail");
    }
    h.push_back(p.h);
    r.push_back(p.r);
    t.push_back(p.t);
    h2.push_back(n.h);
    t2.push_back(n.t);
  }
  using namespace nd;
  auto rel = gather_rows(table.relations, r);
  auto pos = sum(square(sub(add(gather_rows(table.entities, h), rel), gather_rows(table.entities, t))), 1);
  auto neg = sum(square(sub(add(gather_rows(table.entities, h2), rel), gather_rows(table.entities, t2))), 1);
  return sum(relu(add_scalar(sub(pos, neg), gamma)));
}

TransEResult train_embeddings(const std::vector<Triple>& triples, std::size_t num_entities,
                              std::size_t num_relations, const CandidatePools& pools, const TransEConfig& config) {
  if (triples.empty()) throw DataError("transe: no training triples");
  if (config.dim < 1) throw ConfigError("transe: embedding dimension must be >= 1");
  if (pools.tails.empty()) throw ConfigError("transe: vocabulary has no tail entities");
  if (pools.heads.empty()) throw ConfigError("transe: vocabulary has no head entities");
  if (config.negatives < 1) throw ConfigError("transe: negatives per triple must be >= 1");
  if (config.batch_size < 1) throw ConfigError("transe: batch size must be >= 1");
  if (!(config.held_out_fraction >= 0.0 && config.held_out_fraction < 1.0)) {
    throw ConfigError("transe: held_out_fraction must lie in [0, 1)");
  }
  for (const auto& x : triples) {
    if (x.h >= num_entities || x.t >= num_entities || x.r >= num_relations) {
      throw DataError("transe: triple references an id outside the vocabulary");
    }
  }

  nd::Rng rng(config.seed);
  EmbeddingTable table{uniform_table(num_entities, config.dim, rng), uniform_table(num_relations, config.dim, rng)};
  normalize_rows(table.relations);
  normalize_rows(table.entities);

  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto n_hold = static_cast<std::size_t>(config.held_out_fraction * static_cast<double>(triples.size()));
  std::vector<Triple> train, held;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_hold ? held : train).push_back(triples[order[i]]);
  if (train.empty()) train = held;
  if (held.empty()) held = train;

  const std::set<Triple> known(triples.begin(), triples.end());
  nd::Rng eval_rng(config.seed, 1);
  std::vector<Triple> held_neg;
  for (const auto& x : held) held_neg.push_back(corrupt(x, pools, known, eval_rng));

  TransEResult result;
  result.held_out_initial = mean_hinge(held, held_neg, table, config.gamma);

  table.entities.set_requires_grad(true);
  table.relations.set_requires_grad(true);
  nd::Adam opt({{"entities", table.entities}, {"relations", table.relations}}, nd::AdamConfig{.lr = config.lr});
  nd::Rng neg_rng(config.seed, 2);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    normalize_rows(table.entities);
    opt.set_learning_rate(nd::cosine_annealing(config.lr, epoch, config.epochs));
    std::shuffle(train.begin(), train.end(), rng.engine());
    double total = 0.0;
    for (std::size_t start = 0; start < train.size(); start += config.batch_size) {
      const std::size_t end = std::min(train.size(), start + config.batch_size);
      std::vector<Triple> batch, neg;
      for (std::size_t k = 0; k < config.negatives; ++k) {
        for (std::size_t i = start; i < end; ++i) {
          batch.push_back(train[i]);
          neg.push_back(corrupt(train[i], pools, known, neg_rng));
        }
      }
      opt.zero_grad();
      auto loss = transe_loss(batch, neg, table, config.gamma);
      total += loss.item();
      if (loss.item() > 0.0) {
        nd::backward(loss);
        opt.step();
      }
    }
    result.epoch_loss.push_back(total / static_cast<double>(train.size() * config.negatives));
  }
  normalize_rows(table.entities);
  table.entities.set_requires_grad(false);
  table.relations.set_requires_grad(false);
  table.entities.zero_grad();
  table.relations.zero_grad();

  result.held_out_final = mean_hinge(held, held_neg, table, config.gamma);
  result.table = std::move(table);
  return result;
}

TransEResult train_embeddings(const std::vector<Triple>& triples, const EntityVocabulary& vocab,
                              const TransEConfig& config) {
  if (vocab.num_tails() == 0) throw ConfigError("transe: vocabulary has no tail entities");
  CandidatePools pools;
  for (std::size_t i = 0; i < vocab.num_heads(); ++i) pools.heads.push_back(i);
  for (std::size_t f = 0; f < vocab.num_tails(); ++f) pools.tails.push_back(vocab.tail_id(f));
  return train_embeddings(triples, vocab.num_entities(), vocab.num_relations(), pools, config);
}

double tail_hit_rate(const EmbeddingTable& table, const std::vector<Triple>& triples,
                     std::span<const std::size_t> tail_pool) {
  if (triples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& x : triples) {
    const double d_true = triple_distance(table, x);
    bool best = true;
    for (std::size_t t : tail_pool) {
      if (t == x.t) continue;
      if (triple_distance(table, Triple{x.h, x.r, t}) < d_true) {
        best = false;
        break;
      }
    }
    hits += best ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(triples.size());
}

std::vector<double> condition_vector(const TrackPoint& point, std::size_t farm_index, const EntityVocabulary& vocab,
                                     const EmbeddingTable& table, const IntensityScale& scale,
                                     std::size_t* fallbacks) {
  auto grade = grade_of(point, scale);
  if (!grade) throw DataError("condition_vector: track point has no intensity");
  const HeadKey key{vocab.cell_of(point.lat, point.lon), *grade};
  auto head = vocab.head_id(key);
  if (!head) {
    head = vocab.nearest_head(key);
    if (!head) throw DataError(std::string("condition_vector: no head entity with grade ") + intensity_code(*grade));
    if (fallbacks) ++*fallbacks;
  }
  const auto eh = table.entity(*head), et = table.entity(vocab.tail_id(farm_index));
  std::vector<double> out(eh.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = et[j] - eh[j];
  return out;
}

}  // namespace stormcast::kg
