#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <vector>

#include "stormcast/core/types.hpp"
#include "stormcast/data/series.hpp"
#include "stormcast/kg/transe.hpp"
#include "stormcast/nd/tensor.hpp"

namespace stormcast::data {

/// Per-feature standardization statistics, fitted on the training split.
struct NwpStats {
  std::array<double, kNwpFeatures> mean{};
  std::array<double, kNwpFeatures> sd{};
};

/// Fits over steps [begin, end) of every farm. Zero variance throws DataError
/// naming the feature.
NwpStats fit_nwp_stats(const Series& series, std::size_t begin, std::size_t end);

double normalize(double x, const NwpStats& stats, std::size_t feature);
double denormalize(double z, const NwpStats& stats, std::size_t feature);
/// Standardizes a [..., 4] tensor feature-wise.
nd::Tensor normalize(const nd::Tensor& x, const NwpStats& stats);
nd::Tensor denormalize(const nd::Tensor& z, const NwpStats& stats);

double normalize_power(double mw, double capacity_mw);
double denormalize_power(double fraction, double capacity_mw);

/// 12 h -> 48, 24 h -> 96. Throws ConfigError if not a positive multiple of 15 min.
std::size_t horizon_steps(std::chrono::minutes horizon);

struct ForecastWindow {
  std::size_t start_step = 0;
  TimePoint start;
  std::size_t horizon = 0;
  nd::Tensor nwp;        // [F, H, 4] standardized
  nd::Tensor condition;  // [F, H, d_e], zero where no storm is within 350 km
  nd::Tensor target;     // [F, H] in [0, 1]
  bool typhoon = false;
  std::size_t first_influenced = 0;  // step offset; == horizon when none
};

struct DatasetSplit {
  std::vector<std::size_t> train, val, test;
};

enum class ConditionMode {
  kPerStep,      // condition of each step from the storm position at that step
  kWindowStart,  // the window-start condition repeated over the horizon
};

struct WindowConfig {
  std::chrono::minutes horizon{12 * 60};
  std::size_t train_stride = 24;
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  ConditionMode condition_mode = ConditionMode::kPerStep;
};

struct WindowSet {
  std::vector<ForecastWindow> windows;
  DatasetSplit split;
  NwpStats stats;
  std::size_t train_end_step = 0;  // first step not in the training range
  std::size_t val_end_step = 0;
  std::size_t condition_fallbacks = 0;
};

/// Time-ordered split of the series into train / validation / test ranges.
/// Training windows start every `train_stride` steps and may overlap;
/// validation and test windows tile their range without overlap.
WindowSet make_windows(const Series& series, const std::vector<TyphoonTrack>& tracks, const FarmCluster& farms,
                       const kg::EntityVocabulary& vocab, const kg::EmbeddingTable& table,
                       const IntensityScale& scale, const WindowConfig& config);

/// Nearest storm centre within 350 km of farm f at time t, if any.
std::optional<TrackPoint> influencing_storm(const std::vector<TyphoonTrack>& tracks, const Farm& farm, TimePoint t,
                                            const IntensityScale& scale);

}  // namespace stormcast::data
