#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "stormcast/diffusion/sampler.hpp"
#include "stormcast/nd/tensor.hpp"

namespace stormcast::metrics {

/// One evaluated window: targets [F,H] and S predictive samples of [F,H].
/// A point forecast is a one-sample set.
struct WindowForecast {
  nd::Tensor target;
  diffusion::SampleSet samples;
  bool typhoon = false;
};

/// Scores of one window restricted to the first `lead` steps.
double window_crps(const WindowForecast& w, std::size_t lead);  // mean over farm-steps
double window_es(const WindowForecast& w, std::size_t lead);    // farm x step vector
double window_vs(const WindowForecast& w, std::size_t lead);    // over farms per step, mean over steps

struct GroupMetrics {
  std::string group;        // e.g. "typhoon/1-12h"
  std::size_t windows = 0;
  std::size_t points = 0;   // farm-steps
  double mae = 0, rmse = 0, r2 = 0, crps = 0, es = 0, vs = 0;
};

struct MetricsReport {
  std::string model;
  std::vector<GroupMetrics> groups;
  std::vector<std::string> notes;  // omitted groups and why

  const GroupMetrics* find(const std::string& group) const;
};

struct LeadGroup {
  std::string name;
  std::size_t steps;
};

/// 1-12h and 1-24h at 15-minute steps.
std::vector<LeadGroup> default_leads();

/// Groups {all, typhoon} x leads. Deterministic scores use the sample mean.
/// A group with no windows, or a lead longer than the horizon, is omitted
/// and noted.
MetricsReport build_report(const std::string& model, const std::vector<WindowForecast>& windows,
                           const std::vector<LeadGroup>& leads = default_leads());

/// model,group,windows,points,mae,rmse,r2,crps,es,vs
void write_report_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& reports);
std::string format_report_table(const std::vector<MetricsReport>& reports);

}  // namespace stormcast::metrics
