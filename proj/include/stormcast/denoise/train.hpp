#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "stormcast/data/windows.hpp"
#include "stormcast/denoise/denoise_net.hpp"
#include "stormcast/det/detnet.hpp"
#include "stormcast/diffusion/sampler.hpp"

namespace stormcast::denoise {

/// One training pair: forecast error x0 = x - x_bar [F,H] and its condition y.
struct DenoiseExample {
  nd::Tensor x0;
  nd::Tensor y;
};

/// Errors of the (clipped) deterministic forecast on the given windows.
std::vector<DenoiseExample> build_examples(const data::WindowSet& set, const std::vector<std::size_t>& ids,
                                           const det::DetNet& det, const det::DisMatrix& dis);

/// s(x, y, t) = -x + net(x, y, t): the score of the N(0, I) prior of the
/// scaled errors plus the network's correction. Training and sampling both
/// go through it.
diffusion::ScoreFn score_fn(const DenoiseNet& net, const diffusion::DiffusionSchedule& schedule);

/// Mean noise-matching loss over `draws` fixed (t, z) draws per example,
/// with x0 divided by error_scale. Same seed -> same draws.
double denoise_loss(const diffusion::ScoreFn& score, const std::vector<DenoiseExample>& examples, double error_scale,
                    const diffusion::DiffusionSchedule& schedule, std::uint64_t seed, std::size_t draws,
                    double t_min = diffusion::kTMin);

struct DenoiseTrainConfig {
  DenoiseConfig net;
  diffusion::DiffusionSchedule schedule;
  std::size_t epochs = 40;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  std::size_t patience = 8;
  double min_improvement = 1e-6;
  double t_min = diffusion::kTMin;
  std::size_t val_draws = 4;
  std::optional<std::filesystem::path> log_csv;  // epoch,train_loss,val_loss
};

struct DenoiseEpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct DenoiseTrainResult {
  DenoiseNet model;
  std::vector<DenoiseEpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Error scale = RMS of the training errors. Adam with cosine lr, early
/// stopping on the validation loss (training examples when val is empty).
/// Non-finite loss -> NumericError naming the epoch and batch.
DenoiseTrainResult train_denoiser(const std::vector<DenoiseExample>& train, const std::vector<DenoiseExample>& val,
                                  const DenoiseTrainConfig& config);

/// x_bar + error_scale * e for every error sample e, not clipped.
diffusion::SampleSet reconstruct(const nd::Tensor& x_bar, const diffusion::SampleSet& errors, double error_scale);

void clip_unit(diffusion::SampleSet& set);

/// S probabilistic forecasts x_bar + error, clipped to [0, 1]. Sample i uses
/// the stream derive_seed(seed, i).
diffusion::SampleSet forecast_samples(const diffusion::ScoreFn& score, double error_scale, const nd::Tensor& x_bar,
                                      const nd::Tensor& y, const diffusion::DiffusionSchedule& schedule,
                                      std::uint64_t seed, std::size_t count);
diffusion::SampleSet forecast_samples(const DenoiseNet& net, const nd::Tensor& x_bar, const nd::Tensor& y,
                                      const diffusion::DiffusionSchedule& schedule, std::uint64_t seed,
                                      std::size_t count);

}  // namespace stormcast::denoise
