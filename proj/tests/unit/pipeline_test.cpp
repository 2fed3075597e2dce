#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "stormcast/core/csv.hpp"
#include "stormcast/core/errors.hpp"
#include "stormcast/denoise/train.hpp"
#include "stormcast/nd/checkpoint.hpp"
#include "stormcast/nd/ops.hpp"
#include "stormcast/pipeline/config.hpp"
#include "stormcast/pipeline/manifest.hpp"
#include "stormcast/pipeline/stages.hpp"

using namespace stormcast;
using pipeline::Pipeline;
using pipeline::RunConfig;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("stormcast_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig tiny_config(const fs::path& out) {
  RunConfig c;
  c.data.seed = 3;
  c.data.storms = 2;
  c.data.farm_count = 2;
  c.data.start = "2024-07-01T00:00:00Z";
  c.data.end = "2024-09-01T00:00:00Z";
  c.det.epochs = 2;
  c.diffusion.epochs = 2;
  c.diffusion.steps = 10;
  c.sampling.count = 4;
  c.output_dir = out;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

template <class E, class Fn>
std::string message_of(Fn&& fn) {
  try {
    fn();
  } catch (const E& e) {
    return e.what();
  }
  ADD_FAILURE() << "expected exception";
  return {};
}

}  // namespace

TEST(RunConfig, DefaultsAreValidAndRoundTrip) {
  const RunConfig c;
  EXPECT_NO_THROW(pipeline::validate(c));
  const auto j = pipeline::config_to_json(c);
  EXPECT_EQ(pipeline::config_to_json(pipeline::config_from_json(j)), j);
  EXPECT_EQ(j["windows"]["condition"], "window_start");
  EXPECT_EQ(pipeline::config_from_json(nlohmann::json::object()).sampling.count, c.sampling.count);
}

TEST(RunConfig, PartialFileKeepsDefaults) {
  const auto dir = scratch("cfg");
  write_text(dir / "c.json", R"({"sampling": {"count": 7}, "windows": {"horizon": 96, "condition": "per_step"}})");
  const auto c = pipeline::load_config(dir / "c.json");
  EXPECT_EQ(c.sampling.count, 7u);
  EXPECT_EQ(c.windows.horizon, 96u);
  EXPECT_EQ(c.windows.condition, data::ConditionMode::kPerStep);
  EXPECT_EQ(c.det.width, RunConfig{}.det.width);
}

TEST(RunConfig, RejectsInvalidValues) {
  using nlohmann::json;
  auto bad = [](const json& j) {
    return message_of<ConfigError>([&] { pipeline::validate(pipeline::config_from_json(j)); });
  };
  EXPECT_NE(bad({{"windows", {{"horizon", 72}}}}).find("horizon"), std::string::npos);
  EXPECT_NE(bad({{"kg", {{"lr", 0.0}}}}).find("kg.lr"), std::string::npos);
  EXPECT_NE(bad({{"det", {{"lr", -1e-3}}}}).find("det.lr"), std::string::npos);
  EXPECT_NE(bad({{"diffusion", {{"lr", 0}}}}).find("diffusion.lr"), std::string::npos);
  EXPECT_NE(bad({{"sampling", {{"count", 0}}}}).find("sampling.count"), std::string::npos);
  EXPECT_NE(bad({{"det", {{"widht", 4}}}}).find("det.widht"), std::string::npos);
  EXPECT_NE(bad({{"det", {{"epochs", -3}}}}).find("det.epochs"), std::string::npos);
  EXPECT_NE(bad({{"det", {{"epochs", 2.5}}}}).find("det.epochs"), std::string::npos);
  EXPECT_NE(bad({{"windows", {{"condition", "nearest"}}}}).find("per_step"), std::string::npos);
  EXPECT_NE(bad({{"data", {{"source", "csv"}}}}).find("data.farms"), std::string::npos);
  EXPECT_NE(bad({{"data", {{"farm_count", 1}}}}).find("farm_count"), std::string::npos);
  EXPECT_NE(bad({{"det", 3}}).find("det"), std::string::npos);
}

TEST(RunConfig, MalformedFileIsConfigError) {
  const auto dir = scratch("cfg_bad");
  write_text(dir / "c.json", "{\"det\": ");
  EXPECT_THROW(pipeline::load_config(dir / "c.json"), ConfigError);
  EXPECT_THROW(pipeline::load_config(dir / "absent.json"), DataError);
}

TEST(Manifest, GitBlobHashes) {
  const auto dir = scratch("hash");
  write_text(dir / "hello.txt", "hello\n");
  write_text(dir / "empty.txt", "");
  EXPECT_EQ(pipeline::git_blob_sha1(dir / "hello.txt"), "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(pipeline::git_blob_sha1(dir / "empty.txt"), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(pipeline::sha1_hex("abc"), "a9993e364706816aba3e25717850c26c9cd0d89d");
  EXPECT_THROW(pipeline::git_blob_sha1(dir / "nope"), DataError);
}

TEST(GenData, DefaultClusterAndCapacityBound) {
  RunConfig c;
  c.output_dir = scratch("gen");
  Pipeline p(c);
  const auto r = p.gen_data();
  EXPECT_EQ(r.farms, 9u);
  EXPECT_DOUBLE_EQ(r.total_capacity_mw, 2995.0);

  const auto farms = csv::Table::read(p.paths().farms());
  std::map<std::string, double> capacity;
  for (const auto& row : farms.rows())
    capacity[row[farms.require("id")]] = *csv::parse_double(row[farms.require("capacity_mw")]);
  const auto series = csv::Table::read(p.paths().series());
  const auto c_farm = series.require("farm_id"), c_power = series.require("power_mw");
  std::size_t rows = 0;
  for (const auto& row : series.rows()) {
    const double mw = *csv::parse_double(row[c_power]);
    ASSERT_GE(mw, 0.0);
    ASSERT_LE(mw, capacity.at(row[c_farm]));
    ++rows;
  }
  EXPECT_EQ(rows, 9 * r.steps);
}

TEST(GenData, SeedChangesTracksNotSchema) {
  RunConfig a = tiny_config(scratch("seed_a")), b = tiny_config(scratch("seed_b"));
  b.data.seed = 4;
  Pipeline pa(a), pb(b);
  pa.gen_data();
  pb.gen_data();
  const auto ta = csv::Table::read(pa.paths().tracks()), tb = csv::Table::read(pb.paths().tracks());
  EXPECT_EQ(ta.header(), tb.header());
  EXPECT_NE(slurp(pa.paths().tracks()), slurp(pb.paths().tracks()));
  EXPECT_EQ(csv::Table::read(pa.paths().series()).header(), csv::Table::read(pb.paths().series()).header());
}

TEST(GenData, RefusesCsvSource) {
  RunConfig c = tiny_config(scratch("gen_csv"));
  c.data.kind = pipeline::DataKind::kCsv;
  c.data.farms = c.data.series = c.data.tracks = "x.csv";
  Pipeline p(c);
  EXPECT_THROW(p.gen_data(), ConfigError);
}

TEST(Stages, MissingFarmRegistryNamesStageAndFile) {
  const auto dir = scratch("missing_farms");
  RunConfig c = tiny_config(dir);
  c.data.kind = pipeline::DataKind::kCsv;
  c.data.farms = dir / "in/farms.csv";
  c.data.series = dir / "in/series.csv";
  c.data.tracks = dir / "in/tracks.csv";
  Pipeline p(c);
  const auto msg = message_of<DataError>([&] { p.embed_train(); });
  EXPECT_EQ(msg.rfind("embed-train: ", 0), 0u) << msg;
  EXPECT_NE(msg.find("farms.csv"), std::string::npos) << msg;
}

TEST(Stages, OrderIsEnforced) {
  RunConfig c = tiny_config(scratch("order"));
  Pipeline p(c);
  p.gen_data();
  auto msg = message_of<DataError>([&] { p.det_train(); });
  EXPECT_NE(msg.find("embed-train"), std::string::npos) << msg;
  p.embed_train();
  msg = message_of<DataError>([&] { p.diff_train(); });
  EXPECT_NE(msg.find("det-train"), std::string::npos) << msg;
  msg = message_of<DataError>([&] { p.sample(); });
  EXPECT_EQ(msg.rfind("sample: ", 0), 0u) << msg;
  msg = message_of<DataError>([&] { p.evaluate(); });
  EXPECT_EQ(msg.rfind("evaluate: ", 0), 0u) << msg;
}

class TinyRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    config_ = new RunConfig(tiny_config(scratch("tiny")));
    Pipeline p(*config_);
    p.train();
    p.sample();
    result_ = new pipeline::EvaluateResult(p.evaluate());
  }
  static void TearDownTestSuite() {
    delete config_;
    delete result_;
  }
  static RunConfig* config_;
  static pipeline::EvaluateResult* result_;
};

RunConfig* TinyRun::config_ = nullptr;
pipeline::EvaluateResult* TinyRun::result_ = nullptr;

TEST_F(TinyRun, WritesThreeCheckpointsAndManifest) {
  const pipeline::RunPaths paths{config_->output_dir};
  for (const auto& stem : {paths.embeddings(), paths.det_model(), paths.denoiser()}) {
    EXPECT_TRUE(fs::exists(nd::manifest_path(stem))) << stem;
    EXPECT_TRUE(fs::exists(nd::payload_path(stem))) << stem;
  }
  const auto m = pipeline::read_json(pipeline::manifest_file(paths.root));
  for (const char* stage : {"gen-data", "embed-train", "det-train", "diff-train", "sample", "evaluate"})
    EXPECT_TRUE(m["stages"].contains(stage)) << stage;
  EXPECT_FALSE(m["config"].contains("output_dir"));
  EXPECT_EQ(m["stages"]["det-train"]["artifacts"]["det/model.bin"], pipeline::git_blob_sha1(paths.root / "det/model.bin"));
  const auto t = pipeline::read_json(pipeline::timings_file(paths.root));
  EXPECT_TRUE(t.contains("diff-train"));
}

TEST_F(TinyRun, RerunGivesIdenticalManifestAndSamples) {
  RunConfig again = *config_;
  again.output_dir = scratch("tiny_again");
  Pipeline p(again);
  p.train();
  p.sample();
  p.evaluate();
  EXPECT_EQ(slurp(pipeline::manifest_file(again.output_dir)), slurp(pipeline::manifest_file(config_->output_dir)));
  const pipeline::RunPaths a{config_->output_dir}, b{again.output_dir};
  EXPECT_EQ(slurp(a.samples_index()), slurp(b.samples_index()));
  for (const auto& entry : fs::directory_iterator(a.root / "samples"))
    EXPECT_EQ(slurp(entry.path()), slurp(b.root / "samples" / entry.path().filename())) << entry.path();
}

TEST_F(TinyRun, SamplesInUnitRange) {
  const pipeline::RunPaths paths{config_->output_dir};
  const auto index = csv::Table::read(paths.samples_index());
  ASSERT_FALSE(index.rows().empty());
  const auto file = paths.root / "samples" / index.rows().front()[index.require("file")];
  const auto set = diffusion::read_samples_csv(file, Pipeline(*config_).load_dataset().farms.ids());
  EXPECT_EQ(set.count, config_->sampling.count);
  EXPECT_EQ(set.shape, (nd::Shape{2, 48}));
  for (double v : set.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST_F(TinyRun, DeterministicCrpsEqualsMae) {
  const auto& det = result_->report("deterministic");
  ASSERT_FALSE(det.groups.empty());
  for (const auto& g : det.groups) EXPECT_DOUBLE_EQ(g.crps, g.mae) << g.group;
}

TEST_F(TinyRun, TyphoonGroupsOnlyWhenTyphoonWindowsExist) {
  const pipeline::RunPaths paths{config_->output_dir};
  const auto index = csv::Table::read(paths.samples_index());
  bool any = false;
  for (const auto& row : index.rows()) any = any || row[index.require("typhoon")] == "1";
  for (const auto& rep : result_->reports) {
    EXPECT_EQ(rep.find("typhoon/1-12h") != nullptr, any) << rep.model;
    if (!any) {
      EXPECT_FALSE(rep.notes.empty());
    }
  }
  EXPECT_TRUE(fs::exists(paths.metrics_csv()));
  EXPECT_TRUE(fs::exists(paths.metrics_table()));
}

TEST_F(TinyRun, MissingSampleFileIsReportedAndExcluded) {
  RunConfig c = *config_;
  c.output_dir = scratch("tiny_missing");
  fs::copy(config_->output_dir, c.output_dir, fs::copy_options::recursive);
  const pipeline::RunPaths paths{c.output_dir};
  const auto index = csv::Table::read(paths.samples_index());
  const auto& row = index.rows().at(1);
  fs::remove(paths.root / "samples" / row[index.require("file")]);
  const auto r = Pipeline(c).evaluate();
  ASSERT_EQ(r.missing.size(), 1u);
  EXPECT_EQ(std::to_string(r.missing[0]), row[index.require("start_step")]);
  EXPECT_EQ(r.report("scdm").groups.front().windows + 1, result_->report("scdm").groups.front().windows);
}

TEST_F(TinyRun, CheckpointConfigMismatchIsShapeError) {
  RunConfig c = *config_;
  c.output_dir = scratch("tiny_mismatch");
  fs::copy(config_->output_dir, c.output_dir, fs::copy_options::recursive);
  c.det.width = config_->det.width + 4;
  const auto msg = message_of<ShapeError>([&] { Pipeline(c).sample(); });
  EXPECT_NE(msg.find("det.width"), std::string::npos) << msg;
}

TEST(Reconstruction, IdentityBeforeClipping) {
  nd::Rng rng(5);
  std::vector<double> xb(2 * 8), e(3 * 2 * 8);
  for (auto& v : xb) v = rng.uniform();
  for (auto& v : e) v = 3.0 * rng.normal();
  const nd::Tensor x_bar({2, 8}, xb);
  const diffusion::SampleSet errors{3, {2, 8}, e};
  const double scale = 0.07;
  const auto recon = denoise::reconstruct(x_bar, errors, scale);
  bool outside = false;
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t i = 0; i < 16; ++i) {
      const double v = recon.values[s * 16 + i];
      outside = outside || v < 0.0 || v > 1.0;
      EXPECT_NEAR(v - scale * e[s * 16 + i] - xb[i], 0.0, 1e-15);
    }
  EXPECT_TRUE(outside);
  auto clipped = recon;
  denoise::clip_unit(clipped);
  for (double v : clipped.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Reconstruction, ZeroErrorOracleReturnsDeterministicForecast) {
  // Analytic score of a near-delta error distribution N(0, eps^2).
  const diffusion::DiffusionSchedule schedule(0.1, 19.9, 100);
  const double eps2 = 1e-12;
  const diffusion::ScoreFn oracle = [&](const nd::Tensor& x, const nd::Tensor&, double t) {
    const double e = std::exp(-schedule.alpha_bar(t));
    return nd::scale(x, -1.0 / (eps2 * e * e + schedule.sigma2(t)));
  };
  nd::Rng rng(6);
  std::vector<double> xb(3 * 8);
  for (auto& v : xb) v = rng.uniform(0.1, 0.9);
  const nd::Tensor x_bar({3, 8}, xb);
  const double scale = 0.1;
  const auto set = denoise::forecast_samples(oracle, scale, x_bar, nd::Tensor::zeros({2, 3, 8}), schedule, 9, 64);

  // With a linear score each step is x <- c_k x + n_k z, so the sampler's
  // output variance follows exactly from the schedule.
  double var = 1.0;
  const double dt = schedule.dt();
  for (std::size_t k = 0; k < schedule.steps(); ++k) {
    const double t = 1.0 - static_cast<double>(k) * dt;
    const double e = std::exp(-schedule.alpha_bar(t));
    const double a = schedule.alpha(t);
    const double c = 1.0 + a * dt - 2.0 * a * dt / (eps2 * e * e + schedule.sigma2(t));
    var = c * c * var + (k + 1 < schedule.steps() ? 2.0 * a * dt : 0.0);
  }
  const double sd = scale * std::sqrt(var);
  EXPECT_LT(sd, 0.01);
  double worst = 0.0, sq = 0.0;
  for (std::size_t s = 0; s < set.count; ++s)
    for (std::size_t i = 0; i < xb.size(); ++i) {
      const double d = set.values[s * xb.size() + i] - xb[i];
      worst = std::max(worst, std::abs(d));
      sq += d * d;
    }
  EXPECT_LT(worst, 6.0 * sd);
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(set.values.size())), sd, 0.1 * sd);
}

#ifdef STORMCAST_CLI
namespace {

int run_cli(const std::string& args) {
  const int status = std::system((std::string(STORMCAST_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("--help"), 0);
  write_text(dir / "bad.json", R"({"windows": {"horizon": 50}})");
  EXPECT_EQ(run_cli("train -c " + (dir / "bad.json").string()), 1);
  write_text(dir / "csv.json", R"({"data": {"source": "csv", "farms": ")" + (dir / "none.csv").string() +
                                   R"(", "series": "s.csv", "tracks": "t.csv"}, "output_dir": ")" +
                                   (dir / "out").string() + "\"}");
  EXPECT_EQ(run_cli("embed-train -c " + (dir / "csv.json").string()), 2);
  EXPECT_EQ(run_cli("print-config"), 0);
}
#endif
