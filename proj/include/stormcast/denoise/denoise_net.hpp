#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "stormcast/diffusion/schedule.hpp"
#include "stormcast/nd/params.hpp"

namespace stormcast::denoise {

struct DenoiseConfig {
  std::size_t width = 32;          // trunk and condition channels
  std::size_t condition_dim = 10;  // d_e of the typhoon embedding
  std::size_t time_dim = 64;       // sinusoidal projection width (time_dim / 2 frequencies)
  std::uint64_t seed = 17;
};

/// Number of trunk resolutions below the input one (time halves each time).
inline constexpr std::size_t kLevels = 2;

/// [cos(2 pi w t); sin(2 pi w t)] with w log-spaced over [1, 1000].
/// Throws ConfigError for t outside [0, 1].
nd::Tensor time_projection(double t, std::size_t time_dim);

/// y = concat[x_bar; e_t - e_h] laid out as channels: [1 + d, F, H].
nd::Tensor make_condition(const nd::Tensor& x_bar, const nd::Tensor& condition);

/// Conditional score network s(x_t, y, t).
///
/// trunk:  conv blocks at H, H/2, H/4 (time-only average pooling), decoder
///         mirrors with nearest upsampling and skip concatenation
/// time:   projection -> 3-layer swish MLP -> per-level linear map, added
/// y:      two convs; enters the trunk only through per-farm cross-attention
///         over time at every encoder level
/// output: zero-initialized conv, divided by sigma_t
class DenoiseNet {
 public:
  explicit DenoiseNet(DenoiseConfig config);

  /// Per-level embedding vectors [C] for levels 0..kLevels.
  std::vector<nd::Tensor> embed_time(double t) const;
  /// x_t [F,H] with H divisible by 4; y from make_condition. Returns [F,H].
  nd::Tensor forward(const nd::Tensor& x_t, const nd::Tensor& y, double t, const diffusion::DiffusionSchedule& schedule) const;

  const DenoiseConfig& config() const { return config_; }
  nd::ParameterSet& params() { return params_; }
  const nd::ParameterSet& params() const { return params_; }

  /// Forecast errors are divided by this before diffusion and multiplied back
  /// after sampling.
  double error_scale() const { return error_scale_; }
  void set_error_scale(double s);

  void save(const std::filesystem::path& stem) const;
  static DenoiseNet load(const std::filesystem::path& stem);

 private:
  DenoiseConfig config_;
  nd::ParameterSet params_;
  double error_scale_ = 1.0;
};

}  // namespace stormcast::denoise
