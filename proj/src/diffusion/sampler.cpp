#include "stormcast/diffusion/sampler.hpp"

#include <cmath>
#include <fstream>
#include <algorithm>
#include <optional>

#include "stormcast/core/csv.hpp"
#include "stormcast/core/errors.hpp"
#include "stormcast/nd/ops.hpp"

namespace stormcast::diffusion {

nd::Tensor noise_matching_loss(const ScoreFn& net, const nd::Tensor& x0, const nd::Tensor& y, double t,
                               const nd::Tensor& z, const DiffusionSchedule& schedule) {
  const nd::Tensor xt = perturb(x0, t, z, schedule);
  const nd::Tensor s = net(xt, y, t);
  if (s.shape() != z.shape()) throw ShapeError("noise_matching_loss: score shape differs from the noise");
  return nd::sum(nd::square(nd::add(z, nd::scale(s, schedule.sigma(t)))));
}

nd::Tensor SampleSet::tensor(std::size_t i) const {
  auto s = sample(i);
  return nd::Tensor(shape, std::vector<double>(s.begin(), s.end()));
}

namespace {

// One trajectory into out; returns an error message instead of throwing so it
// can run inside a parallel region.
std::optional<std::string> sample_one(const ScoreFn& net, const nd::Tensor& y, const nd::Shape& shape,
                                      const DiffusionSchedule& schedule, std::uint64_t seed, std::size_t index,
                                      std::span<double> out) {
  nd::Rng rng(seed, index);
  const std::size_t n = out.size(), N = schedule.steps();
  const double dt = schedule.dt();
  std::vector<double> x(n);
  rng.fill_normal(x);
  for (std::size_t k = 0; k < N; ++k) {
    const double t = 1.0 - static_cast<double>(k) * dt;
    const double a = schedule.alpha(t);
    const nd::Tensor s = net(nd::Tensor(shape, x), y, t);
    if (s.size() != n) return "reverse_sample: score has " + std::to_string(s.size()) + " elements, state has " +
                              std::to_string(n);
    const auto sv = s.values();
    for (std::size_t i = 0; i < n; ++i) x[i] += (a * x[i] + 2.0 * a * sv[i]) * dt;
    if (k + 1 < N) {
      const double g = std::sqrt(2.0 * a * dt);
      for (auto& v : x) v += g * rng.normal();
    }
    for (double v : x) {
      if (!std::isfinite(v)) {
        return "reverse_sample: non-finite state in sample " + std::to_string(index) + " at step " +
               std::to_string(k + 1) + " of " + std::to_string(N) + " (t=" + std::to_string(t) + ")";
      }
    }
  }
  std::copy(x.begin(), x.end(), out.begin());
  return std::nullopt;
}

SampleSet prepare(const nd::Shape& shape, std::size_t count) {
  if (count == 0) throw ConfigError("reverse_sample: sample count must be >= 1");
  SampleSet set;
  set.count = count;
  set.shape = shape;
  set.values.assign(count * nd::numel(shape), 0.0);
  return set;
}

void raise_first(const std::vector<std::optional<std::string>>& errors) {
  for (const auto& e : errors)
    if (e) throw NumericError(*e);
}

}  // namespace

SampleSet reverse_sample(const ScoreFn& net, const nd::Tensor& y, const nd::Shape& shape,
                         const DiffusionSchedule& schedule, std::uint64_t seed, std::size_t count) {
  SampleSet set = prepare(shape, count);
  const std::size_t m = set.sample_size();
  std::vector<std::optional<std::string>> errors(count);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < count; ++i) {
    try {
      errors[i] = sample_one(net, y, shape, schedule, seed, i, std::span<double>(set.values).subspan(i * m, m));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  raise_first(errors);
  return set;
}

namespace reference {
SampleSet reverse_sample(const ScoreFn& net, const nd::Tensor& y, const nd::Shape& shape,
                         const DiffusionSchedule& schedule, std::uint64_t seed, std::size_t count) {
  SampleSet set = prepare(shape, count);
  const std::size_t m = set.sample_size();
  for (std::size_t i = 0; i < count; ++i) {
    if (auto err = sample_one(net, y, shape, schedule, seed, i, std::span<double>(set.values).subspan(i * m, m))) {
      throw NumericError(*err);
    }
  }
  return set;
}
}  // namespace reference

std::vector<double> euler_maruyama_forward(double x0, double t_end, const DiffusionSchedule& schedule, nd::Rng& rng,
                                           std::size_t paths) {
  if (paths == 0) throw ConfigError("euler_maruyama_forward: paths must be >= 1");
  if (!(t_end >= 0.0 && t_end <= 1.0)) throw ConfigError("euler_maruyama_forward: t_end must lie in [0, 1]");
  const double dt = schedule.dt();
  const auto steps = static_cast<std::size_t>(std::llround(t_end / dt));
  std::vector<double> x(paths, x0);
  for (std::size_t k = 0; k < steps; ++k) {
    const double a = schedule.alpha(static_cast<double>(k) * dt);
    const double g = std::sqrt(2.0 * a * dt);
    for (auto& v : x) v += -a * v * dt + g * rng.normal();
  }
  return x;
}

void write_samples_csv(const std::filesystem::path& path, const SampleSet& set, const std::vector<std::string>& farm_ids,
                       const std::vector<double>& scale) {
  if (set.shape.size() != 2 || set.shape[0] != farm_ids.size()) {
    throw ShapeError("write_samples_csv: samples must be [farms, horizon] with one id per farm");
  }
  if (!scale.empty() && scale.size() != farm_ids.size()) throw ShapeError("write_samples_csv: one scale per farm");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "sample_id,farm_id,step,value\n";
  const std::size_t F = set.shape[0], H = set.shape[1];
  for (std::size_t s = 0; s < set.count; ++s) {
    const auto v = set.sample(s);
    for (std::size_t f = 0; f < F; ++f) {
      const double k = scale.empty() ? 1.0 : scale[f];
      for (std::size_t h = 0; h < H; ++h) out << s << ',' << farm_ids[f] << ',' << h << ',' << csv::format_double(v[f * H + h] * k) << '\n';
    }
  }
}

SampleSet read_samples_csv(const std::filesystem::path& path, const std::vector<std::string>& farm_ids) {
  const auto table = csv::Table::read(path);
  const std::size_t c_s = table.require("sample_id"), c_f = table.require("farm_id"), c_h = table.require("step"),
                    c_v = table.require("value");
  const std::size_t F = farm_ids.size();
  struct Row {
    std::size_t s, f, h;
    double v;
  };
  std::vector<Row> rows;
  std::size_t S = 0, H = 0;
  for (const auto& r : table.rows()) {
    auto it = std::find(farm_ids.begin(), farm_ids.end(), r.at(c_f));
    if (it == farm_ids.end()) throw DataError(path.string() + ": unknown farm '" + r.at(c_f) + "'");
    const auto s = csv::parse_double(r.at(c_s)), h = csv::parse_double(r.at(c_h)), v = csv::parse_double(r.at(c_v));
    if (!s || !h || !v || *s < 0 || *h < 0) throw DataError(path.string() + ": malformed sample row");
    rows.push_back({static_cast<std::size_t>(*s), static_cast<std::size_t>(it - farm_ids.begin()),
                    static_cast<std::size_t>(*h), *v});
    S = std::max(S, rows.back().s + 1);
    H = std::max(H, rows.back().h + 1);
  }
  if (rows.empty() || rows.size() != S * F * H) {
    throw DataError(path.string() + ": expected every (sample, farm, step) once, got " + std::to_string(rows.size()) +
                    " rows for " + std::to_string(S) + " x " + std::to_string(F) + " x " + std::to_string(H));
  }
  SampleSet set;
  set.count = S;
  set.shape = {F, H};
  set.values.assign(S * F * H, std::nan(""));
  for (const auto& r : rows) {
    double& slot = set.values[(r.s * F + r.f) * H + r.h];
    if (!std::isnan(slot)) throw DataError(path.string() + ": duplicate sample row");
    slot = r.v;
  }
  return set;
}

}  // namespace stormcast::diffusion
