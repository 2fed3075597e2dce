#include "stormcast/metrics/scores.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stormcast/core/errors.hpp"
#include "stormcast/metrics/exact_sum.hpp"

namespace stormcast::metrics {

namespace {

void check_pair(std::span<const double> x, std::span<const double> f, const char* op) {
  if (x.size() != f.size()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(x.size()) + " observations vs " +
                     std::to_string(f.size()) + " forecasts");
  }
  if (x.empty()) throw DataError(std::string(op) + ": no observations");
}

void check_samples(std::span<const double> samples, std::size_t count, std::size_t d, const char* op) {
  if (count == 0) throw DataError(std::string(op) + ": empty sample set");
  if (samples.size() != count * d) {
    throw ShapeError(std::string(op) + ": " + std::to_string(samples.size()) + " sample values for " +
                     std::to_string(count) + " samples of dimension " + std::to_string(d));
  }
}

double sample_term(std::span<const double> samples, double x) {
  ExactSum a;
  for (double s : samples) a.add_abs_diff(s, x);
  return a.value();
}

double combine(double obs_sum, double pair_sum, std::size_t count) {
  const double S = static_cast<double>(count);
  return obs_sum / S - pair_sum / (2.0 * S * S);
}

double distance(std::span<const double> a, std::span<const double> b) {
  double ss = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) ss += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(ss);
}

// sum over rows i in [begin, end) of sum_{j > i} ||s_i - s_j||
void pair_distances(std::span<const double> samples, std::size_t count, std::size_t d, std::size_t i, ExactSum& acc) {
  const auto si = samples.subspan(i * d, d);
  for (std::size_t j = i + 1; j < count; ++j) acc.add(distance(si, samples.subspan(j * d, d)));
}

double obs_distances(std::span<const double> samples, std::size_t count, std::span<const double> x) {
  ExactSum a;
  const std::size_t d = x.size();
  for (std::size_t i = 0; i < count; ++i) a.add(distance(samples.subspan(i * d, d), x));
  return a.value();
}

}  // namespace

double mae(std::span<const double> x, std::span<const double> f) {
  check_pair(x, f, "mae");
  ExactSum s;
  for (std::size_t i = 0; i < x.size(); ++i) s.add_abs_diff(x[i], f[i]);
  return s.value() / static_cast<double>(x.size());
}

double rmse(std::span<const double> x, std::span<const double> f) {
  check_pair(x, f, "rmse");
  ExactSum s;
  for (std::size_t i = 0; i < x.size(); ++i) s.add((x[i] - f[i]) * (x[i] - f[i]));
  return std::sqrt(s.value() / static_cast<double>(x.size()));
}

double r2(std::span<const double> x, std::span<const double> f) {
  check_pair(x, f, "r2");
  ExactSum m;
  for (double v : x) m.add(v);
  const double mean = m.value() / static_cast<double>(x.size());
  ExactSum sse, sst;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sse.add((x[i] - f[i]) * (x[i] - f[i]));
    sst.add((x[i] - mean) * (x[i] - mean));
  }
  if (!(sst.value() > 0.0)) throw DataError("r2: observations are constant (zero total variance)");
  return 1.0 - sse.value() / sst.value();
}

double crps(std::span<const double> samples, double x) {
  check_samples(samples, samples.size(), 1, "crps");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double S = static_cast<double>(sorted.size());
  ExactSum pairs;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    pairs.add_product(2.0 * (2.0 * static_cast<double>(k + 1) - S - 1.0), sorted[k]);
  }
  return combine(sample_term(samples, x), pairs.value(), sorted.size());
}

double crps_naive(std::span<const double> samples, double x) {
  check_samples(samples, samples.size(), 1, "crps");
  const std::size_t n = samples.size();
  ExactSum pairs;
#pragma omp parallel
  {
    ExactSum local;
#pragma omp for schedule(static) nowait
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) local.add_abs_diff(samples[i], samples[j]);
#pragma omp critical(stormcast_crps_merge)
    pairs.merge(local);
  }
  return combine(sample_term(samples, x), pairs.value(), n);
}

double energy_score(std::span<const double> samples, std::size_t count, std::span<const double> x) {
  const std::size_t d = x.size();
  if (d == 0) throw ShapeError("energy_score: zero-dimensional observation");
  check_samples(samples, count, d, "energy_score");
  ExactSum pairs;
#pragma omp parallel
  {
    ExactSum local;
#pragma omp for schedule(dynamic) nowait
    for (std::size_t i = 0; i < count; ++i) pair_distances(samples, count, d, i, local);
#pragma omp critical(stormcast_es_merge)
    pairs.merge(local);
  }
  return combine(obs_distances(samples, count, x), 2.0 * pairs.value(), count);
}

double variogram_score(std::span<const double> samples, std::size_t count, std::span<const double> x, double p) {
  const std::size_t d = x.size();
  if (d < 2) throw ShapeError("variogram_score: needs at least 2 variables, got " + std::to_string(d));
  check_samples(samples, count, d, "variogram_score");
  ExactSum total;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      // sum_s (g_obs - g_s) / S, exact before the division
      const double g = std::pow(std::abs(x[i] - x[j]), p);
      ExactSum m;
      for (std::size_t s = 0; s < count; ++s) {
        m.add(g);
        m.add(-std::pow(std::abs(samples[s * d + i] - samples[s * d + j]), p));
      }
      const double diff = m.value() / static_cast<double>(count);
      total.add(diff * diff);
    }
  }
  return total.value();
}

namespace reference {

double crps_naive(std::span<const double> samples, double x) {
  check_samples(samples, samples.size(), 1, "crps");
  ExactSum pairs;
  for (double a : samples)
    for (double b : samples) pairs.add_abs_diff(a, b);
  return combine(sample_term(samples, x), pairs.value(), samples.size());
}

double energy_score(std::span<const double> samples, std::size_t count, std::span<const double> x) {
  const std::size_t d = x.size();
  if (d == 0) throw ShapeError("energy_score: zero-dimensional observation");
  check_samples(samples, count, d, "energy_score");
  ExactSum pairs;
  for (std::size_t i = 0; i < count; ++i) pair_distances(samples, count, d, i, pairs);
  return combine(obs_distances(samples, count, x), 2.0 * pairs.value(), count);
}

}  // namespace reference

}  // namespace stormcast::metrics
