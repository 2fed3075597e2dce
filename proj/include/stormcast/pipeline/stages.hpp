#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stormcast/core/types.hpp"
#include "stormcast/data/series.hpp"
#include "stormcast/metrics/report.hpp"
#include "stormcast/pipeline/config.hpp"

namespace stormcast::pipeline {

/// File layout under the output directory.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path farms() const { return root / "data/farms.csv"; }
  std::filesystem::path series() const { return root / "data/series.csv"; }
  std::filesystem::path tracks() const { return root / "data/tracks.csv"; }
  std::filesystem::path vocab() const { return root / "kg/vocab.csv"; }
  std::filesystem::path triples() const { return root / "kg/triples.csv"; }
  std::filesystem::path embeddings() const { return root / "kg/embeddings"; }
  std::filesystem::path det_model() const { return root / "det/model"; }
  std::filesystem::path det_log() const { return root / "det/log.csv"; }
  std::filesystem::path det_unconditioned() const { return root / "det/unconditioned"; }
  std::filesystem::path det_unconditioned_log() const { return root / "det/unconditioned_log.csv"; }
  std::filesystem::path denoiser() const { return root / "diffusion/model"; }
  std::filesystem::path denoiser_log() const { return root / "diffusion/log.csv"; }
  std::filesystem::path samples_index() const { return root / "samples/index.csv"; }
  std::filesystem::path sample_file(std::size_t start_step) const;
  std::filesystem::path metrics_csv() const { return root / "eval/metrics.csv"; }
  std::filesystem::path metrics_table() const { return root / "eval/metrics.txt"; }
};

struct Dataset {
  FarmCluster farms;
  data::Series series;
  std::vector<TyphoonTrack> tracks;
};

struct GenDataResult {
  std::size_t farms = 0;
  std::size_t steps = 0;
  std::size_t storms = 0;
  double total_capacity_mw = 0.0;
};

struct EmbedResult {
  std::size_t triples = 0;
  std::size_t entities = 0;
  double held_out_initial = 0.0;
  double held_out_final = 0.0;
};

struct DetStageResult {
  std::size_t best_epoch = 0;
  double val_mse = 0.0;
  double test_mse = 0.0;
  double nwp_val_mse = 0.0;
  std::optional<double> unconditioned_val_mse;
  std::optional<double> unconditioned_test_mse;
};

struct DiffStageResult {
  std::size_t train_examples = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double error_scale = 0.0;
};

struct SampleStageResult {
  std::size_t windows = 0;
  std::size_t typhoon_windows = 0;
  std::size_t samples_per_window = 0;
};

struct EvaluateResult {
  std::vector<metrics::MetricsReport> reports;  // scdm, deterministic, gaussian
  std::vector<std::size_t> missing;             // start steps of test windows without samples
  const metrics::MetricsReport& report(const std::string& model) const;
};

/// Training runs embed-train, det-train and diff-train strictly in that order;
/// each stage refuses to start without the artifacts of the previous one.
/// Every stage records its artifacts in the run manifest. Failures are
/// rethrown with the stage name prepended and the original error type.
class Pipeline {
 public:
  explicit Pipeline(RunConfig config);

  const RunConfig& config() const { return config_; }
  const RunPaths& paths() const { return paths_; }

  GenDataResult gen_data();
  EmbedResult embed_train();
  DetStageResult det_train();
  DiffStageResult diff_train();
  /// Generates synthetic data first when it is missing.
  void train();
  SampleStageResult sample();
  EvaluateResult evaluate();

  Dataset load_dataset() const;

 private:
  std::vector<std::filesystem::path> input_files() const;

  RunConfig config_;
  RunPaths paths_;
};

}  // namespace stormcast::pipeline
