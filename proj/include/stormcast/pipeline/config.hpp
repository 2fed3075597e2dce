#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "stormcast/data/windows.hpp"
#include "stormcast/kg/transe.hpp"

namespace stormcast::pipeline {

enum class DataKind { kSynthetic, kCsv };

struct DataSection {
  DataKind kind = DataKind::kSynthetic;
  // synthetic
  std::uint64_t seed = 1;
  std::size_t storms = 12;
  std::size_t farm_count = 0;  // first N default farms, 0 = all nine
  std::string start = "2024-05-01T00:00:00Z";
  std::string end = "2024-11-01T00:00:00Z";
  double landfall_fraction = 0.75;
  // csv
  std::filesystem::path farms, series, tracks;
};

struct WindowSection {
  std::size_t horizon = 48;
  std::size_t train_stride = 24;
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  data::ConditionMode condition = data::ConditionMode::kWindowStart;
};

struct KgSection {
  double grid_deg = 0.5;
  kg::TransEConfig transe;
};

struct DetSection {
  std::size_t width = 8;
  double lr = 1e-3;
  std::size_t epochs = 40;
  std::size_t batch_size = 8;
  std::size_t patience = 10;
  std::uint64_t seed = 11;
  /// Also train a variant without the typhoon condition, for comparison.
  bool unconditioned_baseline = false;
};

struct DiffusionSection {
  double a = 0.1;
  double b = 19.9;
  std::size_t steps = 100;
  double t_min = 1e-3;
  double lr = 1e-3;
  std::size_t epochs = 40;
  std::size_t batch_size = 8;
  std::size_t patience = 8;
  std::size_t width = 8;
  std::size_t time_dim = 32;
  std::size_t val_draws = 4;
  std::uint64_t seed = 17;
};

struct SamplingSection {
  std::size_t count = 50;
  std::uint64_t seed = 2024;
};

struct RunConfig {
  DataSection data;
  WindowSection windows;
  KgSection kg;
  DetSection det;
  DiffusionSection diffusion;
  SamplingSection sampling;
  std::filesystem::path output_dir = "run";
};

/// Throws ConfigError on the first violated constraint.
void validate(const RunConfig& config);

/// Missing keys keep their defaults; unknown keys and wrong types throw
/// ConfigError naming the key.
RunConfig config_from_json(const nlohmann::json& j);
/// Every key, output_dir included.
nlohmann::json config_to_json(const RunConfig& config);

/// Reads and validates a JSON config file.
RunConfig load_config(const std::filesystem::path& path);

const char* condition_mode_name(data::ConditionMode mode);

}  // namespace stormcast::pipeline
