#include "stormcast/metrics/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "stormcast/core/csv.hpp"
#include "stormcast/core/errors.hpp"
#include "stormcast/metrics/exact_sum.hpp"
#include "stormcast/metrics/scores.hpp"

namespace stormcast::metrics {

namespace {

struct Dims {
  std::size_t farms, horizon;
};

Dims check(const WindowForecast& w, std::size_t lead) {
  if (w.target.rank() != 2) throw ShapeError("window target must be [F,H]");
  const Dims d{w.target.dim(0), w.target.dim(1)};
  if (w.samples.shape != w.target.shape()) {
    throw ShapeError("window samples " + nd::shape_string(w.samples.shape) + " do not match target " +
                     nd::shape_string(w.target.shape()));
  }
  if (w.samples.count == 0) throw DataError("window has no samples");
  if (lead == 0 || lead > d.horizon) throw ShapeError("lead " + std::to_string(lead) + " outside the horizon");
  return d;
}

// Samples and target restricted to the first `lead` steps, farm-major.
void gather(const WindowForecast& w, std::size_t lead, std::vector<double>& samples, std::vector<double>& x) {
  const Dims d = check(w, lead);
  x.clear();
  samples.clear();
  for (std::size_t f = 0; f < d.farms; ++f)
    for (std::size_t h = 0; h < lead; ++h) x.push_back(w.target[f * d.horizon + h]);
  for (std::size_t s = 0; s < w.samples.count; ++s) {
    const auto v = w.samples.sample(s);
    for (std::size_t f = 0; f < d.farms; ++f)
      for (std::size_t h = 0; h < lead; ++h) samples.push_back(v[f * d.horizon + h]);
  }
}

}  // namespace

double window_crps(const WindowForecast& w, std::size_t lead) {
  const Dims d = check(w, lead);
  ExactSum total;
  std::vector<double> column(w.samples.count);
  for (std::size_t f = 0; f < d.farms; ++f) {
    for (std::size_t h = 0; h < lead; ++h) {
      const std::size_t i = f * d.horizon + h;
      for (std::size_t s = 0; s < w.samples.count; ++s) column[s] = w.samples.sample(s)[i];
      total.add(crps(column, w.target[i]));
    }
  }
  return total.value() / static_cast<double>(d.farms * lead);
}

double window_es(const WindowForecast& w, std::size_t lead) {
  std::vector<double> samples, x;
  gather(w, lead, samples, x);
  return energy_score(samples, w.samples.count, x);
}

double window_vs(const WindowForecast& w, std::size_t lead) {
  const Dims d = check(w, lead);
  ExactSum total;
  std::vector<double> samples(w.samples.count * d.farms), x(d.farms);
  for (std::size_t h = 0; h < lead; ++h) {
    for (std::size_t f = 0; f < d.farms; ++f) {
      x[f] = w.target[f * d.horizon + h];
      for (std::size_t s = 0; s < w.samples.count; ++s) samples[s * d.farms + f] = w.samples.sample(s)[f * d.horizon + h];
    }
    total.add(variogram_score(samples, w.samples.count, x));
  }
  return total.value() / static_cast<double>(lead);
}

const GroupMetrics* MetricsReport::find(const std::string& group) const {
  for (const auto& g : groups)
    if (g.group == group) return &g;
  return nullptr;
}

std::vector<LeadGroup> default_leads() { return {{"1-12h", 48}, {"1-24h", 96}}; }

MetricsReport build_report(const std::string& model, const std::vector<WindowForecast>& windows,
                           const std::vector<LeadGroup>& leads) {
  MetricsReport report;
  report.model = model;
  for (const char* subset : {"all", "typhoon"}) {
    const bool typhoon_only = std::string(subset) == "typhoon";
    std::vector<const WindowForecast*> members;
    for (const auto& w : windows)
      if (!typhoon_only || w.typhoon) members.push_back(&w);
    for (const auto& lead : leads) {
      const std::string name = std::string(subset) + "/" + lead.name;
      if (members.empty()) {
        report.notes.push_back(name + ": omitted, no windows");
        continue;
      }
      if (lead.steps > members.front()->target.dim(1)) {
        report.notes.push_back(name + ": omitted, horizon of " + std::to_string(members.front()->target.dim(1)) +
                               " steps is shorter than the lead");
        continue;
      }
      GroupMetrics g;
      g.group = name;
      g.windows = members.size();
      std::vector<double> x, mean;
      ExactSum crps_sum, es_sum, vs_sum;
      for (const auto* w : members) {
        const std::size_t F = w->target.dim(0), H = w->target.dim(1);
        for (std::size_t f = 0; f < F; ++f) {
          for (std::size_t h = 0; h < lead.steps; ++h) {
            const std::size_t i = f * H + h;
            x.push_back(w->target[i]);
            ExactSum m;
            for (std::size_t s = 0; s < w->samples.count; ++s) m.add(w->samples.sample(s)[i]);
            mean.push_back(m.value() / static_cast<double>(w->samples.count));
          }
        }
        crps_sum.add(window_crps(*w, lead.steps));
        es_sum.add(window_es(*w, lead.steps));
        vs_sum.add(window_vs(*w, lead.steps));
      }
      g.points = x.size();
      g.mae = metrics::mae(x, mean);
      g.rmse = metrics::rmse(x, mean);
      try {
        g.r2 = metrics::r2(x, mean);
      } catch (const DataError&) {
        g.r2 = std::numeric_limits<double>::quiet_NaN();
        report.notes.push_back(name + ": r2 undefined, constant targets");
      }
      g.crps = crps_sum.value() / static_cast<double>(g.windows);
      g.es = es_sum.value() / static_cast<double>(g.windows);
      g.vs = vs_sum.value() / static_cast<double>(g.windows);
      report.groups.push_back(g);
    }
  }
  return report;
}

void write_report_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& reports) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "model,group,windows,points,mae,rmse,r2,crps,es,vs\n";
  for (const auto& r : reports) {
    for (const auto& g : r.groups) {
      out << r.model << ',' << g.group << ',' << g.windows << ',' << g.points << ',' << csv::format_double(g.mae)
          << ',' << csv::format_double(g.rmse) << ',' << csv::format_double(g.r2) << ','
          << csv::format_double(g.crps) << ',' << csv::format_double(g.es) << ',' << csv::format_double(g.vs)
          << '\n';
    }
  }
}

std::string format_report_table(const std::vector<MetricsReport>& reports) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %-14s %7s %9s %9s %9s %9s %9s %9s\n", "model", "group", "windows", "mae",
                "rmse", "r2", "crps", "es", "vs");
  os << line;
  for (const auto& r : reports) {
    for (const auto& g : r.groups) {
      std::snprintf(line, sizeof line, "%-14s %-14s %7zu %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f\n", r.model.c_str(),
                    g.group.c_str(), g.windows, g.mae, g.rmse, g.r2, g.crps, g.es, g.vs);
      os << line;
    }
    for (const auto& n : r.notes) os << "  note (" << r.model << "): " << n << '\n';
  }
  return os.str();
}

}  // namespace stormcast::metrics
