#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "stormcast/data/series.hpp"
#include "stormcast/data/windows.hpp"
#include "stormcast/det/dis.hpp"
#include "stormcast/nd/params.hpp"

namespace stormcast::det {

inline constexpr std::array<std::size_t, 4> kBlockKernels{2, 3, 6, 7};

struct DetNetConfig {
  std::size_t width = 32;          // channels per block, also the attention dimension
  std::size_t condition_dim = 10;  // typhoon embedding size; ignored when !use_condition
  bool use_condition = true;
  std::uint64_t seed = 11;
};

/// Point forecaster over the farm x time grid.
///
/// in-proj:  linear(nwp [F,H,4]) + linear(condition [F,H,d], zero init) -> [F,H,C]
/// block b:  Q,K,V = conv(1 x k_b); per time step, attention over farms with
///           scores QK^T/sqrt(C) + Dis; residual; pointwise swish feed-forward
/// head:     linear(layer norm(concat(input, block outputs))) + linear(input) -> [F,H]
class DetNet {
 public:
  explicit DetNet(DetNetConfig config);

  /// Unclipped forecast [F,H]; differentiable in the parameters.
  nd::Tensor forward(const nd::Tensor& nwp, const nd::Tensor& condition, const DisMatrix& dis) const;
  nd::Tensor forward(const data::ForecastWindow& w, const DisMatrix& dis) const {
    return forward(w.nwp, w.condition, dis);
  }
  /// Inference forecast clipped to [0, 1], detached.
  nd::Tensor predict(const data::ForecastWindow& w, const DisMatrix& dis) const;

  const DetNetConfig& config() const { return config_; }
  nd::ParameterSet& params() { return params_; }
  const nd::ParameterSet& params() const { return params_; }

  /// Checkpoint at <stem>.manifest / <stem>.bin; the architecture is recovered
  /// from the tensor shapes.
  void save(const std::filesystem::path& stem) const;
  static DetNet load(const std::filesystem::path& stem);

 private:
  DetNetConfig config_;
  nd::ParameterSet params_;
};

/// Mean of squared elementwise differences; ShapeError when shapes differ.
nd::Tensor mse_loss(const nd::Tensor& prediction, const nd::Tensor& target);

/// Forecast obtained by pushing the NWP wind through the power curve [F,H].
nd::Tensor nwp_implied_power(const data::ForecastWindow& w, const data::NwpStats& stats,
                             const data::PowerCurve& curve);

struct DetTrainConfig {
  DetNetConfig net;
  std::size_t epochs = 60;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  /// Stop after this many epochs without a validation improvement.
  std::size_t patience = 10;
  double min_improvement = 1e-6;
  data::PowerCurve curve;
  std::optional<std::filesystem::path> log_csv;
};

struct DetEpochLog {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct DetTrainResult {
  DetNet model;
  std::vector<DetEpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
  double baseline_val_mse = 0.0;  // NWP-implied power on the validation split
};

/// Mean MSE of clipped forecasts over the given windows.
double evaluate_mse(const DetNet& net, const data::WindowSet& set, const std::vector<std::size_t>& ids,
                    const DisMatrix& dis);

/// Adam on the training split, model selection on validation (training split
/// when validation is empty). Non-finite loss -> NumericError.
DetTrainResult train_det(const data::WindowSet& set, const DisMatrix& dis, const DetTrainConfig& config);

}  // namespace stormcast::det
