#include "stormcast/data/windows.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stormcast/core/errors.hpp"
#include "stormcast/core/geo.hpp"

namespace stormcast::data {

NwpStats fit_nwp_stats(const Series& series, std::size_t begin, std::size_t end) {
  if (begin >= end || end > series.steps) throw DataError("nwp stats: empty or out-of-range fitting range");
  NwpStats st;
  const double n = static_cast<double>((end - begin) * series.farms);
  for (std::size_t k = 0; k < kNwpFeatures; ++k) {
    double m = 0.0;
    for (std::size_t f = 0; f < series.farms; ++f)
      for (std::size_t s = begin; s < end; ++s) m += series.feature(f, s, k);
    m /= n;
    double v = 0.0;
    for (std::size_t f = 0; f < series.farms; ++f)
      for (std::size_t s = begin; s < end; ++s) v += (series.feature(f, s, k) - m) * (series.feature(f, s, k) - m);
    const double sd = std::sqrt(v / n);
    if (!(sd > 0.0) || sd < 1e-12 * std::max(1.0, std::abs(m))) {
      throw DataError(std::string("nwp feature '") + kNwpNames[k] + "' has zero variance on the training split");
    }
    st.mean[k] = m;
    st.sd[k] = sd;
  }
  return st;
}

double normalize(double x, const NwpStats& stats, std::size_t k) { return (x - stats.mean[k]) / stats.sd[k]; }

double denormalize(double z, const NwpStats& stats, std::size_t k) { return std::fma(z, stats.sd[k], stats.mean[k]); }

nd::Tensor normalize(const nd::Tensor& x, const NwpStats& stats) {
  if (x.shape().back() != kNwpFeatures) throw ShapeError("normalize: last axis must hold the 4 NWP features");
  std::vector<double> v(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = normalize(v[i], stats, i % kNwpFeatures);
  return nd::Tensor(x.shape(), std::move(v));
}

nd::Tensor denormalize(const nd::Tensor& z, const NwpStats& stats) {
  if (z.shape().back() != kNwpFeatures) throw ShapeError("denormalize: last axis must hold the 4 NWP features");
  std::vector<double> v(z.values().begin(), z.values().end());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = denormalize(v[i], stats, i % kNwpFeatures);
  return nd::Tensor(z.shape(), std::move(v));
}

double normalize_power(double mw, double capacity_mw) {
  if (!(capacity_mw > 0.0)) throw DataError("normalize_power: capacity must be positive");
  return std::clamp(mw / capacity_mw, 0.0, 1.0);
}

double denormalize_power(double fraction, double capacity_mw) { return fraction * capacity_mw; }

std::size_t horizon_steps(std::chrono::minutes horizon) {
  if (horizon.count() <= 0 || horizon % kStep != std::chrono::minutes(0)) {
    throw ConfigError("horizon of " + std::to_string(horizon.count()) +
                      " minutes is not a positive multiple of the 15-minute step");
  }
  return static_cast<std::size_t>(horizon / kStep);
}

std::optional<TrackPoint> influencing_storm(const std::vector<TyphoonTrack>& tracks, const Farm& farm, TimePoint t,
                                            const IntensityScale& scale) {
  std::optional<TrackPoint> best;
  double best_km = std::numeric_limits<double>::infinity();
  for (const auto& track : tracks) {
    auto p = track.at(t, scale);
    if (!p || !p->intensity) continue;
    const double km = haversine_km(p->lat, p->lon, farm.lat, farm.lon);
    if (km <= kg::kImpactRadiusKm && km < best_km) {
      best_km = km;
      best = p;
    }
  }
  return best;
}

namespace {

ForecastWindow build_window(const Series& series, const std::vector<TyphoonTrack>& tracks, const FarmCluster& farms,
                            const kg::EntityVocabulary& vocab, const kg::EmbeddingTable& table,
                            const IntensityScale& scale, const NwpStats& stats, ConditionMode mode,
                            std::size_t start, std::size_t horizon, std::size_t& fallbacks) {
  const std::size_t F = series.farms, d = table.dim();
  ForecastWindow w;
  w.start_step = start;
  w.start = series.time(start);
  w.horizon = horizon;
  w.first_influenced = horizon;
  std::vector<double> nwp(F * horizon * kNwpFeatures), cond(F * horizon * d, 0.0), target(F * horizon);
  for (std::size_t f = 0; f < F; ++f) {
    std::vector<double> start_cond;
    if (mode == ConditionMode::kWindowStart) {
      if (auto p = influencing_storm(tracks, farms[f], w.start, scale)) {
        start_cond = kg::condition_vector(*p, f, vocab, table, scale, &fallbacks);
      }
    }
    for (std::size_t h = 0; h < horizon; ++h) {
      const std::size_t s = start + h;
      for (std::size_t k = 0; k < kNwpFeatures; ++k) {
        nwp[(f * horizon + h) * kNwpFeatures + k] = normalize(series.feature(f, s, k), stats, k);
      }
      target[f * horizon + h] = normalize_power(series.power(f, s), farms[f].capacity_mw);
      auto storm = influencing_storm(tracks, farms[f], series.time(s), scale);
      if (!storm) continue;
      w.typhoon = true;
      w.first_influenced = std::min(w.first_influenced, h);
      std::vector<double> c;
      if (mode == ConditionMode::kPerStep) c = kg::condition_vector(*storm, f, vocab, table, scale, &fallbacks);
      else c = start_cond;
      std::copy(c.begin(), c.end(), cond.begin() + static_cast<long>((f * horizon + h) * d));
    }
    if (mode == ConditionMode::kWindowStart && !start_cond.empty()) {
      for (std::size_t h = 0; h < horizon; ++h) {
        std::copy(start_cond.begin(), start_cond.end(), cond.begin() + static_cast<long>((f * horizon + h) * d));
      }
    }
  }
  w.nwp = nd::Tensor({F, horizon, kNwpFeatures}, std::move(nwp));
  w.condition = nd::Tensor({F, horizon, d}, std::move(cond));
  w.target = nd::Tensor({F, horizon}, std::move(target));
  return w;
}

}  // namespace

WindowSet make_windows(const Series& series, const std::vector<TyphoonTrack>& tracks, const FarmCluster& farms,
                       const kg::EntityVocabulary& vocab, const kg::EmbeddingTable& table,
                       const IntensityScale& scale, const WindowConfig& config) {
  const std::size_t H = horizon_steps(config.horizon);
  if (series.farms != farms.size()) throw DataError("make_windows: series and farm registry disagree on farm count");
  if (vocab.num_tails() != farms.size()) throw DataError("make_windows: vocabulary and farm registry disagree");
  if (config.train_stride < 1) throw ConfigError("make_windows: train_stride must be >= 1");
  if (!(config.train_fraction > 0.0 && config.val_fraction >= 0.0 &&
        config.train_fraction + config.val_fraction < 1.0)) {
    throw ConfigError("make_windows: split fractions must be positive and sum below 1");
  }
  WindowSet out;
  out.train_end_step = static_cast<std::size_t>(config.train_fraction * static_cast<double>(series.steps));
  out.val_end_step =
      static_cast<std::size_t>((config.train_fraction + config.val_fraction) * static_cast<double>(series.steps));
  if (out.train_end_step < H || series.steps - out.val_end_step < H) {
    throw DataError("make_windows: series too short for a " + std::to_string(H) + "-step horizon in every split");
  }
  out.stats = fit_nwp_stats(series, 0, out.train_end_step);

  auto add = [&](std::size_t start, std::vector<std::size_t>& split) {
    split.push_back(out.windows.size());
    out.windows.push_back(build_window(series, tracks, farms, vocab, table, scale, out.stats, config.condition_mode,
                                       start, H, out.condition_fallbacks));
  };
  for (std::size_t s = 0; s + H <= out.train_end_step; s += config.train_stride) add(s, out.split.train);
  for (std::size_t s = out.train_end_step; s + H <= out.val_end_step; s += H) add(s, out.split.val);
  for (std::size_t s = out.val_end_step; s + H <= series.steps; s += H) add(s, out.split.test);
  return out;
}

}  // namespace stormcast::data
