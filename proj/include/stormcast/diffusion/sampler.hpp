#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stormcast/diffusion/schedule.hpp"
#include "stormcast/nd/random.hpp"

namespace stormcast::diffusion {

/// Learned (or analytic) score s(x_t, y, t). Must be safe to call concurrently.
using ScoreFn = std::function<nd::Tensor(const nd::Tensor& x, const nd::Tensor& y, double t)>;

/// ||z + sigma_t s(x_t, y, t)||^2 summed over elements, x_t = perturb(x0, t, z).
nd::Tensor noise_matching_loss(const ScoreFn& net, const nd::Tensor& x0, const nd::Tensor& y, double t,
                               const nd::Tensor& z, const DiffusionSchedule& schedule);

/// S draws of x_0, each of the given shape, stored back to back.
struct SampleSet {
  std::size_t count = 0;
  nd::Shape shape;
  std::vector<double> values;

  std::size_t sample_size() const { return nd::numel(shape); }
  std::span<const double> sample(std::size_t i) const {
    return std::span<const double>(values).subspan(i * sample_size(), sample_size());
  }
  nd::Tensor tensor(std::size_t i) const;
};

/// Reverse-time SDE from x_1 ~ N(0, I) down to t = 0 in schedule.steps()
/// steps of dt: at t_k = 1 - k dt,
///   x <- x + (alpha x + 2 alpha s(x, y, t_k)) dt,  then  x <- x + sqrt(2 alpha dt) z
/// with the noise skipped on the final step. Sample i draws from
/// Rng(seed, i), so results do not depend on the thread count.
/// Non-finite state -> NumericError naming the sample and step.
SampleSet reverse_sample(const ScoreFn& net, const nd::Tensor& y, const nd::Shape& shape,
                         const DiffusionSchedule& schedule, std::uint64_t seed, std::size_t count);

namespace reference {
/// Serial loop over samples; same results as the parallel sampler.
SampleSet reverse_sample(const ScoreFn& net, const nd::Tensor& y, const nd::Shape& shape,
                         const DiffusionSchedule& schedule, std::uint64_t seed, std::size_t count);
}  // namespace reference

/// Euler-Maruyama paths of dx = -alpha x dt + sqrt(2 alpha) dw from x0 at
/// t = 0 to t_end, with the schedule's dt. Returns x(t_end) per path.
std::vector<double> euler_maruyama_forward(double x0, double t_end, const DiffusionSchedule& schedule, nd::Rng& rng,
                                           std::size_t paths);

/// CSV with columns sample_id,farm_id,step,value for [farms, horizon] samples,
/// values scaled by `scale` per farm (empty = 1).
void write_samples_csv(const std::filesystem::path& path, const SampleSet& set, const std::vector<std::string>& farm_ids,
                       const std::vector<double>& scale = {});

/// Inverse of write_samples_csv with unit scale; rows may come in any order
/// but every (sample, farm, step) must appear exactly once.
SampleSet read_samples_csv(const std::filesystem::path& path, const std::vector<std::string>& farm_ids);

}  // namespace stormcast::diffusion
