#include "stormcast/pipeline/stages.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "stormcast/core/csv.hpp"
#include "stormcast/core/errors.hpp"
#include "stormcast/data/synth.hpp"
#include "stormcast/data/tracks.hpp"
#include "stormcast/data/windows.hpp"
#include "stormcast/denoise/train.hpp"
#include "stormcast/det/detnet.hpp"
#include "stormcast/det/dis.hpp"
#include "stormcast/diffusion/sampler.hpp"
#include "stormcast/kg/transe.hpp"
#include "stormcast/kg/vocabulary.hpp"
#include "stormcast/nd/checkpoint.hpp"
#include "stormcast/pipeline/manifest.hpp"

namespace stormcast::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kGaussianStream = 0x6761757373ULL;

template <class Fn>
auto run_stage(const std::string& stage, const fs::path& out, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    auto result = fn();
    record_timing(out, stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return result;
  } catch (const ConfigError& e) {
    throw ConfigError(stage + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(stage + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(stage + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(stage + ": " + e.what());
  } catch (const fs::filesystem_error& e) {
    throw DataError(stage + ": " + e.what());
  }
}

void require_files(const std::vector<fs::path>& files, const char* producer) {
  for (const auto& f : files)
    if (!fs::exists(f)) throw DataError("missing " + f.string() + "; run " + producer + " first");
}

std::vector<fs::path> checkpoint_files(const fs::path& stem) { return {nd::manifest_path(stem), nd::payload_path(stem)}; }

fs::path relative_to(const fs::path& p, const fs::path& root) { return p.lexically_relative(root); }

std::vector<fs::path> rel_checkpoint(const fs::path& stem, const fs::path& root) {
  return {relative_to(nd::manifest_path(stem), root), relative_to(nd::payload_path(stem), root)};
}

struct KgState {
  kg::EntityVocabulary vocab;
  kg::EmbeddingTable table;
};

KgState load_kg(const RunPaths& p) {
  require_files({p.vocab(), nd::manifest_path(p.embeddings()), nd::payload_path(p.embeddings())}, "embed-train");
  return {kg::EntityVocabulary::load(p.vocab()), kg::EmbeddingTable::load(p.embeddings())};
}

data::WindowSet build_windows(const RunConfig& c, const Dataset& d, const KgState& kg) {
  data::WindowConfig wc;
  wc.horizon = std::chrono::minutes(15 * c.windows.horizon);
  wc.train_stride = c.windows.train_stride;
  wc.train_fraction = c.windows.train_fraction;
  wc.val_fraction = c.windows.val_fraction;
  wc.condition_mode = c.windows.condition;
  return data::make_windows(d.series, d.tracks, d.farms, kg.vocab, kg.table, IntensityScale{}, wc);
}

det::DetNet load_det(const RunPaths& p, const RunConfig& c, const KgState& kg) {
  require_files(checkpoint_files(p.det_model()), "det-train");
  auto net = det::DetNet::load(p.det_model());
  if (net.config().width != c.det.width)
    throw ShapeError("checkpoint " + p.det_model().string() + " has width " + std::to_string(net.config().width) +
                     " but det.width is " + std::to_string(c.det.width));
  if (net.config().use_condition && net.config().condition_dim != kg.table.dim())
    throw ShapeError("checkpoint " + p.det_model().string() + " expects " +
                     std::to_string(net.config().condition_dim) + " condition channels, embeddings have " +
                     std::to_string(kg.table.dim()));
  return net;
}

denoise::DenoiseNet load_denoiser(const RunPaths& p, const RunConfig& c, const KgState& kg) {
  require_files(checkpoint_files(p.denoiser()), "diff-train");
  auto net = denoise::DenoiseNet::load(p.denoiser());
  if (net.config().width != c.diffusion.width || net.config().condition_dim != kg.table.dim())
    throw ShapeError("checkpoint " + p.denoiser().string() + " (width " + std::to_string(net.config().width) +
                     ", condition " + std::to_string(net.config().condition_dim) +
                     ") does not match diffusion.width / kg.dim");
  return net;
}

diffusion::DiffusionSchedule schedule_of(const RunConfig& c) {
  return diffusion::DiffusionSchedule(c.diffusion.a, c.diffusion.b, c.diffusion.steps);
}

/// Test-split windows in order, with their deterministic forecasts.
struct TestForecasts {
  std::vector<const data::ForecastWindow*> windows;
  std::vector<nd::Tensor> point;
};

TestForecasts test_forecasts(const data::WindowSet& set, const det::DetNet& net, const det::DisMatrix& dis) {
  TestForecasts out;
  for (auto i : set.split.test) {
    out.windows.push_back(&set.windows[i]);
    out.point.push_back(net.predict(set.windows[i], dis));
  }
  return out;
}

json report_summary(const metrics::MetricsReport& r) {
  json j = json::object();
  for (const auto& g : r.groups)
    j[g.group] = {{"windows", g.windows}, {"mae", g.mae},   {"rmse", g.rmse}, {"r2", g.r2},
                  {"crps", g.crps},       {"es", g.es},     {"vs", g.vs}};
  return j;
}

}  // namespace

fs::path RunPaths::sample_file(std::size_t start_step) const {
  char name[32];
  std::snprintf(name, sizeof name, "window_%06zu.csv", start_step);
  return root / "samples" / name;
}

const metrics::MetricsReport& EvaluateResult::report(const std::string& model) const {
  for (const auto& r : reports)
    if (r.model == model) return r;
  throw DataError("no report for model '" + model + "'");
}

Pipeline::Pipeline(RunConfig config) : config_(std::move(config)), paths_{config_.output_dir} { validate(config_); }

std::vector<fs::path> Pipeline::input_files() const {
  if (config_.data.kind == DataKind::kSynthetic) return {paths_.farms(), paths_.series(), paths_.tracks()};
  return {config_.data.farms, config_.data.series, config_.data.tracks};
}

Dataset Pipeline::load_dataset() const {
  const auto files = input_files();
  for (const auto& f : files)
    if (!fs::exists(f))
      throw DataError("missing input " + f.string() +
                      (config_.data.kind == DataKind::kSynthetic ? "; run gen-data first" : ""));
  Dataset d;
  d.farms = data::read_farms(files[0]);
  d.series = data::read_series(files[1], d.farms);
  d.tracks = data::ingest_tracks(files[2], IntensityScale{});
  return d;
}

GenDataResult Pipeline::gen_data() {
  return run_stage("gen-data", paths_.root, [&] {
    if (config_.data.kind != DataKind::kSynthetic) throw ConfigError("gen-data needs data.source = synthetic");
    data::SynthConfig sc;
    sc.storm_count = config_.data.storms;
    if (config_.data.farm_count > 0) sc.farms.resize(config_.data.farm_count);
    sc.start = parse_iso8601(config_.data.start);
    sc.end = parse_iso8601(config_.data.end);
    sc.landfall_fraction = config_.data.landfall_fraction;
    const auto scenario = data::synth_scenario(config_.data.seed, sc);
    fs::create_directories(paths_.root / "data");
    data::write_farms(paths_.farms(), scenario.farms);
    data::write_series(paths_.series(), scenario.series, scenario.farms);
    data::write_tracks(paths_.tracks(), scenario.tracks);

    GenDataResult r{scenario.farms.size(), scenario.series.steps, scenario.tracks.size(),
                    scenario.farms.total_capacity_mw()};
    record_stage(config_, {"gen-data",
                           {"data/farms.csv", "data/series.csv", "data/tracks.csv"},
                           {{"farms", r.farms}, {"steps", r.steps}, {"storms", r.storms},
                            {"total_capacity_mw", r.total_capacity_mw}}});
    return r;
  });
}

EmbedResult Pipeline::embed_train() {
  return run_stage("embed-train", paths_.root, [&] {
    const Dataset d = load_dataset();
    record_inputs(config_, input_files());
    const IntensityScale scale;
    const auto vocab = kg::EntityVocabulary::build(d.tracks, d.farms, scale, config_.kg.grid_deg);
    const auto triples = d.tracks.empty() ? std::vector<kg::Triple>{}
                                          : kg::build_triples(d.tracks, d.farms, vocab, scale);
    fs::create_directories(paths_.root / "kg");
    vocab.save(paths_.vocab());
    kg::write_triples_csv(paths_.triples(), triples, vocab);

    EmbedResult r{triples.size(), vocab.num_entities(), 0.0, 0.0};
    kg::EmbeddingTable table;
    if (triples.empty()) {
      // Nothing ever comes within range, so every condition is zero anyway.
      const std::size_t dim = config_.kg.transe.dim;
      table = {nd::Tensor::zeros({vocab.num_entities(), dim}), nd::Tensor::zeros({vocab.num_relations(), dim})};
    } else {
      auto res = kg::train_embeddings(triples, vocab, config_.kg.transe);
      r.held_out_initial = res.held_out_initial;
      r.held_out_final = res.held_out_final;
      table = std::move(res.table);
    }
    table.save(paths_.embeddings());

    auto artifacts = rel_checkpoint(paths_.embeddings(), paths_.root);
    artifacts.insert(artifacts.end(), {"kg/vocab.csv", "kg/triples.csv"});
    record_stage(config_, {"embed-train", artifacts,
                           {{"triples", r.triples}, {"entities", r.entities},
                            {"held_out_initial", r.held_out_initial}, {"held_out_final", r.held_out_final}}});
    return r;
  });
}

DetStageResult Pipeline::det_train() {
  return run_stage("det-train", paths_.root, [&] {
    const KgState kg = load_kg(paths_);
    const Dataset d = load_dataset();
    const auto set = build_windows(config_, d, kg);
    const auto dis = det::build_dis_matrix(d.farms);
    fs::create_directories(paths_.root / "det");

    det::DetTrainConfig tc;
    tc.net = {config_.det.width, kg.table.dim(), true, config_.det.seed};
    tc.epochs = config_.det.epochs;
    tc.batch_size = config_.det.batch_size;
    tc.lr = config_.det.lr;
    tc.patience = config_.det.patience;
    tc.log_csv = paths_.det_log();
    const auto res = det::train_det(set, dis, tc);
    res.model.save(paths_.det_model());

    DetStageResult r;
    r.best_epoch = res.best_epoch;
    r.val_mse = res.best_val_mse;
    r.nwp_val_mse = res.baseline_val_mse;
    r.test_mse = det::evaluate_mse(res.model, set, set.split.test, dis);
    json summary = {{"best_epoch", r.best_epoch}, {"val_mse", r.val_mse}, {"test_mse", r.test_mse},
                    {"nwp_val_mse", r.nwp_val_mse}};
    auto artifacts = rel_checkpoint(paths_.det_model(), paths_.root);
    artifacts.push_back("det/log.csv");

    if (config_.det.unconditioned_baseline) {
      tc.net.use_condition = false;
      tc.log_csv = paths_.det_unconditioned_log();
      const auto plain = det::train_det(set, dis, tc);
      plain.model.save(paths_.det_unconditioned());
      r.unconditioned_val_mse = plain.best_val_mse;
      r.unconditioned_test_mse = det::evaluate_mse(plain.model, set, set.split.test, dis);
      summary["unconditioned_val_mse"] = *r.unconditioned_val_mse;
      summary["unconditioned_test_mse"] = *r.unconditioned_test_mse;
      const auto extra = rel_checkpoint(paths_.det_unconditioned(), paths_.root);
      artifacts.insert(artifacts.end(), extra.begin(), extra.end());
      artifacts.push_back("det/unconditioned_log.csv");
    }
    record_stage(config_, {"det-train", artifacts, summary});
    return r;
  });
}

DiffStageResult Pipeline::diff_train() {
  return run_stage("diff-train", paths_.root, [&] {
    const KgState kg = load_kg(paths_);
    const auto net = load_det(paths_, config_, kg);
    const Dataset d = load_dataset();
    const auto set = build_windows(config_, d, kg);
    const auto dis = det::build_dis_matrix(d.farms);
    const auto train = denoise::build_examples(set, set.split.train, net, dis);
    const auto val = denoise::build_examples(set, set.split.val, net, dis);
    fs::create_directories(paths_.root / "diffusion");

    const auto& dc = config_.diffusion;
    denoise::DenoiseTrainConfig tc;
    tc.net = {dc.width, kg.table.dim(), dc.time_dim, dc.seed};
    tc.schedule = schedule_of(config_);
    tc.epochs = dc.epochs;
    tc.batch_size = dc.batch_size;
    tc.lr = dc.lr;
    tc.patience = dc.patience;
    tc.t_min = dc.t_min;
    tc.val_draws = dc.val_draws;
    tc.log_csv = paths_.denoiser_log();
    const auto res = denoise::train_denoiser(train, val, tc);
    res.model.save(paths_.denoiser());

    DiffStageResult r{train.size(), res.best_epoch, res.best_val_loss, res.model.error_scale()};
    auto artifacts = rel_checkpoint(paths_.denoiser(), paths_.root);
    artifacts.push_back("diffusion/log.csv");
    record_stage(config_, {"diff-train", artifacts,
                           {{"train_examples", r.train_examples}, {"best_epoch", r.best_epoch},
                            {"best_val_loss", r.best_val_loss}, {"error_scale", r.error_scale}}});
    return r;
  });
}

void Pipeline::train() {
  if (config_.data.kind == DataKind::kSynthetic) {
    bool present = true;
    for (const auto& f : input_files()) present = present && fs::exists(f);
    if (!present) gen_data();
  }
  embed_train();
  det_train();
  diff_train();
}

SampleStageResult Pipeline::sample() {
  return run_stage("sample", paths_.root, [&] {
    require_files({paths_.vocab(), nd::manifest_path(paths_.embeddings()), nd::manifest_path(paths_.det_model()),
                   nd::manifest_path(paths_.denoiser())},
                  "train");
    const KgState kg = load_kg(paths_);
    const auto det_net = load_det(paths_, config_, kg);
    const auto denoiser = load_denoiser(paths_, config_, kg);
    const Dataset d = load_dataset();
    const auto set = build_windows(config_, d, kg);
    const auto dis = det::build_dis_matrix(d.farms);
    const auto schedule = schedule_of(config_);
    const auto score = denoise::score_fn(denoiser, schedule);
    const auto ids = d.farms.ids();
    const auto forecasts = test_forecasts(set, det_net, dis);

    fs::remove_all(paths_.root / "samples");
    fs::create_directories(paths_.root / "samples");
    std::ofstream index(paths_.samples_index());
    index << "window,start_step,start,typhoon,file\n";
    std::vector<fs::path> artifacts{"samples/index.csv"};
    SampleStageResult r{forecasts.windows.size(), 0, config_.sampling.count};
    for (std::size_t k = 0; k < forecasts.windows.size(); ++k) {
      const auto& w = *forecasts.windows[k];
      const auto& x_bar = forecasts.point[k];
      const auto y = denoise::make_condition(x_bar, w.condition);
      const auto samples = denoise::forecast_samples(score, denoiser.error_scale(), x_bar, y, schedule,
                                                     nd::derive_seed(config_.sampling.seed, w.start_step),
                                                     config_.sampling.count);
      const auto file = paths_.sample_file(w.start_step);
      diffusion::write_samples_csv(file, samples, ids);
      index << k << ',' << w.start_step << ',' << format_iso8601(w.start) << ',' << (w.typhoon ? 1 : 0) << ','
            << file.filename().string() << '\n';
      artifacts.push_back(relative_to(file, paths_.root));
      r.typhoon_windows += w.typhoon;
    }
    index.close();
    if (!index) throw DataError("cannot write " + paths_.samples_index().string());
    record_stage(config_, {"sample", artifacts,
                           {{"windows", r.windows},
                            {"typhoon_windows", r.typhoon_windows},
                            {"samples_per_window", r.samples_per_window}}});
    return r;
  });
}

EvaluateResult Pipeline::evaluate() {
  return run_stage("evaluate", paths_.root, [&] {
    require_files({paths_.samples_index()}, "sample");
    const KgState kg = load_kg(paths_);
    const auto det_net = load_det(paths_, config_, kg);
    const Dataset d = load_dataset();
    const auto set = build_windows(config_, d, kg);
    const auto dis = det::build_dis_matrix(d.farms);
    const auto ids = d.farms.ids();
    const auto forecasts = test_forecasts(set, det_net, dis);

    std::set<std::size_t> test_steps;
    for (const auto* w : forecasts.windows) test_steps.insert(w->start_step);
    std::map<std::size_t, fs::path> files;
    const auto index = csv::Table::read(paths_.samples_index());
    const auto c_step = index.require("start_step"), c_file = index.require("file");
    for (const auto& row : index.rows()) {
      const auto step = csv::parse_double(row.at(c_step));
      if (!step || !test_steps.count(static_cast<std::size_t>(*step)))
        throw DataError("sample index row '" + row.at(c_step) + "' does not match any test window");
      files[static_cast<std::size_t>(*step)] = paths_.samples_index().parent_path() / row.at(c_file);
    }

    // Independent Gaussian baseline: per-farm mean and spread of training errors.
    const std::size_t F = d.farms.size();
    std::vector<double> err_sum(F, 0.0), err_sq(F, 0.0);
    std::size_t per_farm = 0;
    for (auto i : set.split.train) {
      const auto& w = set.windows[i];
      const auto x_bar = det_net.predict(w, dis);
      const std::size_t H = w.horizon;
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t h = 0; h < H; ++h) {
          const double e = w.target[f * H + h] - x_bar[f * H + h];
          err_sum[f] += e;
          err_sq[f] += e * e;
        }
      per_farm += H;
    }
    std::vector<double> mu(F), sd(F);
    for (std::size_t f = 0; f < F; ++f) {
      mu[f] = err_sum[f] / static_cast<double>(per_farm);
      sd[f] = std::sqrt(std::max(0.0, err_sq[f] / static_cast<double>(per_farm) - mu[f] * mu[f]));
    }

    EvaluateResult r;
    std::vector<metrics::WindowForecast> scdm, point, gauss;
    const std::size_t S = config_.sampling.count;
    for (std::size_t k = 0; k < forecasts.windows.size(); ++k) {
      const auto& w = *forecasts.windows[k];
      const auto it = files.find(w.start_step);
      if (it == files.end() || !fs::exists(it->second)) {
        r.missing.push_back(w.start_step);
        continue;
      }
      auto samples = diffusion::read_samples_csv(it->second, ids);
      if (samples.shape != w.target.shape())
        throw ShapeError("samples in " + it->second.string() + " do not match the window shape");
      scdm.push_back({w.target, std::move(samples), w.typhoon});

      const auto& x_bar = forecasts.point[k];
      const auto xv = x_bar.values();
      diffusion::SampleSet one{1, x_bar.shape(), std::vector<double>(xv.begin(), xv.end())};
      point.push_back({w.target, std::move(one), w.typhoon});

      diffusion::SampleSet g{S, x_bar.shape(), std::vector<double>(S * x_bar.size())};
      nd::Rng rng(nd::derive_seed(config_.sampling.seed, kGaussianStream), w.start_step);
      const std::size_t H = w.horizon;
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t f = 0; f < F; ++f)
          for (std::size_t h = 0; h < H; ++h)
            g.values[s * F * H + f * H + h] = std::clamp(x_bar[f * H + h] + mu[f] + sd[f] * rng.normal(), 0.0, 1.0);
      gauss.push_back({w.target, std::move(g), w.typhoon});
    }
    if (scdm.empty()) throw DataError("no test window has samples");

    r.reports = {metrics::build_report("scdm", scdm), metrics::build_report("deterministic", point),
                 metrics::build_report("gaussian", gauss)};
    for (auto step : r.missing)
      for (auto& rep : r.reports) rep.notes.push_back("window at step " + std::to_string(step) + " has no samples");

    fs::create_directories(paths_.root / "eval");
    metrics::write_report_csv(paths_.metrics_csv(), r.reports);
    {
      std::ofstream table(paths_.metrics_table());
      table << metrics::format_report_table(r.reports);
      for (const auto& rep : r.reports)
        for (const auto& n : rep.notes) table << rep.model << ": " << n << '\n';
    }
    json summary = json::object();
    for (const auto& rep : r.reports) summary[rep.model] = report_summary(rep);
    summary["missing_windows"] = r.missing;
    record_stage(config_, {"evaluate", {"eval/metrics.csv", "eval/metrics.txt"}, summary});
    return r;
  });
}

}  // namespace stormcast::pipeline
