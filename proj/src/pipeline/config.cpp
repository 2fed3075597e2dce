#include "stormcast/pipeline/config.hpp"

#include <fstream>
#include <set>
#include <type_traits>
#include <utility>
#include <vector>

#include "stormcast/core/errors.hpp"
#include "stormcast/core/time.hpp"
#include "stormcast/data/synth.hpp"

namespace stormcast::pipeline {

using nlohmann::json;

namespace {

template <class E>
using EnumNames = std::vector<std::pair<const char*, E>>;

const EnumNames<DataKind> kSources{{"synthetic", DataKind::kSynthetic}, {"csv", DataKind::kCsv}};
const EnumNames<data::ConditionMode> kConditionModes{{"window_start", data::ConditionMode::kWindowStart},
                                                     {"per_step", data::ConditionMode::kPerStep}};

class Reader {
 public:
  Reader(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) throw ConfigError(where() + "expected an object");
  }

  template <class T>
  void field(const char* key, T& ref) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    const std::string name = prefix_ + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(name + ": expected true or false");
      ref = it->get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_unsigned()) throw ConfigError(name + ": expected a non-negative integer");
      ref = it->get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(name + ": expected a number");
      ref = it->get<T>();
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      if (!it->is_string()) throw ConfigError(name + ": expected a path string");
      ref = it->get<std::string>();
    } else {
      if (!it->is_string()) throw ConfigError(name + ": expected a string");
      ref = it->get<std::string>();
    }
  }

  template <class E>
  void enumeration(const char* key, E& ref, const EnumNames<E>& names) {
    std::string text;
    field(key, text);
    if (text.empty()) return;
    for (const auto& [n, v] : names)
      if (text == n) {
        ref = v;
        return;
      }
    std::string options;
    for (const auto& [n, v] : names) options += std::string(options.empty() ? "" : ", ") + n;
    throw ConfigError(prefix_ + key + ": '" + text + "' is not one of " + options);
  }

  template <class Fn>
  void section(const char* key, Fn&& fn) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    Reader sub(*it, prefix_ + key + ".");
    fn(sub);
    sub.finish();
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key " + prefix_ + k);
  }

 private:
  std::string where() const { return prefix_.empty() ? "config: " : prefix_.substr(0, prefix_.size() - 1) + ": "; }

  const json& obj_;
  std::string prefix_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  template <class T>
  void field(const char* key, T& ref) {
    if constexpr (std::is_same_v<T, std::filesystem::path>)
      out[key] = ref.generic_string();
    else
      out[key] = ref;
  }

  template <class E>
  void enumeration(const char* key, E& ref, const EnumNames<E>& names) {
    for (const auto& [n, v] : names)
      if (v == ref) out[key] = n;
  }

  template <class Fn>
  void section(const char* key, Fn&& fn) {
    Writer sub;
    fn(sub);
    out[key] = std::move(sub.out);
  }

  json out = json::object();
};

template <class V>
void bind(V& v, RunConfig& c) {
  v.section("data", [&](auto& s) {
    s.enumeration("source", c.data.kind, kSources);
    s.field("seed", c.data.seed);
    s.field("storms", c.data.storms);
    s.field("farm_count", c.data.farm_count);
    s.field("start", c.data.start);
    s.field("end", c.data.end);
    s.field("landfall_fraction", c.data.landfall_fraction);
    s.field("farms", c.data.farms);
    s.field("series", c.data.series);
    s.field("tracks", c.data.tracks);
  });
  v.section("windows", [&](auto& s) {
    s.field("horizon", c.windows.horizon);
    s.field("train_stride", c.windows.train_stride);
    s.field("train_fraction", c.windows.train_fraction);
    s.field("val_fraction", c.windows.val_fraction);
    s.enumeration("condition", c.windows.condition, kConditionModes);
  });
  v.section("kg", [&](auto& s) {
    auto& t = c.kg.transe;
    s.field("grid_deg", c.kg.grid_deg);
    s.field("dim", t.dim);
    s.field("gamma", t.gamma);
    s.field("lr", t.lr);
    s.field("epochs", t.epochs);
    s.field("batch_size", t.batch_size);
    s.field("negatives", t.negatives);
    s.field("held_out_fraction", t.held_out_fraction);
    s.field("seed", t.seed);
  });
  v.section("det", [&](auto& s) {
    s.field("width", c.det.width);
    s.field("lr", c.det.lr);
    s.field("epochs", c.det.epochs);
    s.field("batch_size", c.det.batch_size);
    s.field("patience", c.det.patience);
    s.field("seed", c.det.seed);
    s.field("unconditioned_baseline", c.det.unconditioned_baseline);
  });
  v.section("diffusion", [&](auto& s) {
    auto& d = c.diffusion;
    s.field("a", d.a);
    s.field("b", d.b);
    s.field("steps", d.steps);
    s.field("t_min", d.t_min);
    s.field("lr", d.lr);
    s.field("epochs", d.epochs);
    s.field("batch_size", d.batch_size);
    s.field("patience", d.patience);
    s.field("width", d.width);
    s.field("time_dim", d.time_dim);
    s.field("val_draws", d.val_draws);
    s.field("seed", d.seed);
  });
  v.section("sampling", [&](auto& s) {
    s.field("count", c.sampling.count);
    s.field("seed", c.sampling.seed);
  });
  v.field("output_dir", c.output_dir);
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void validate(const RunConfig& c) {
  if (c.data.kind == DataKind::kSynthetic) {
    require(c.data.storms >= 1, "data.storms must be >= 1");
    require(c.data.farm_count != 1 && c.data.farm_count <= data::default_farms().size(),
            "data.farm_count must be 0 (all) or between 2 and " + std::to_string(data::default_farms().size()));
    require(parse_iso8601(c.data.start) < parse_iso8601(c.data.end), "data.start must precede data.end");
    require(c.data.landfall_fraction >= 0.0 && c.data.landfall_fraction <= 1.0,
            "data.landfall_fraction must lie in [0, 1]");
  } else {
    require(!c.data.farms.empty() && !c.data.series.empty() && !c.data.tracks.empty(),
            "csv data source needs data.farms, data.series and data.tracks");
  }
  require(c.windows.horizon == 48 || c.windows.horizon == 96, "windows.horizon must be 48 or 96");
  require(c.windows.train_stride >= 1, "windows.train_stride must be >= 1");
  require(c.windows.train_fraction > 0.0 && c.windows.val_fraction >= 0.0 &&
              c.windows.train_fraction + c.windows.val_fraction < 1.0,
          "windows fractions must leave a non-empty test range");
  require(c.kg.grid_deg > 0.0, "kg.grid_deg must be > 0");
  require(c.kg.transe.dim >= 1, "kg.dim must be >= 1");
  require(c.kg.transe.gamma > 0.0, "kg.gamma must be > 0");
  require(c.kg.transe.lr > 0.0, "kg.lr must be > 0");
  require(c.det.lr > 0.0, "det.lr must be > 0");
  require(c.det.width >= 1 && c.det.batch_size >= 1, "det.width and det.batch_size must be >= 1");
  require(c.diffusion.lr > 0.0, "diffusion.lr must be > 0");
  require(c.diffusion.a > 0.0 && c.diffusion.b >= 0.0, "diffusion.a must be > 0 and diffusion.b >= 0");
  require(c.diffusion.steps >= 1, "diffusion.steps must be >= 1");
  require(c.diffusion.t_min > 0.0 && c.diffusion.t_min < 1.0, "diffusion.t_min must lie in (0, 1)");
  require(c.diffusion.width >= 1 && c.diffusion.batch_size >= 1, "diffusion.width and batch_size must be >= 1");
  require(c.diffusion.time_dim >= 2 && c.diffusion.time_dim % 2 == 0, "diffusion.time_dim must be even and >= 2");
  require(c.diffusion.val_draws >= 1, "diffusion.val_draws must be >= 1");
  require(c.sampling.count >= 1, "sampling.count must be >= 1");
  require(!c.output_dir.empty(), "output_dir must not be empty");
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Reader r(j, "");
  bind(r, c);
  r.finish();
  return c;
}

json config_to_json(const RunConfig& config) {
  RunConfig c = config;
  Writer w;
  bind(w, c);
  return std::move(w.out);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig c = config_from_json(j);
  validate(c);
  return c;
}

const char* condition_mode_name(data::ConditionMode mode) {
  for (const auto& [n, v] : kConditionModes)
    if (v == mode) return n;
  return "?";
}

}  // namespace stormcast::pipeline
