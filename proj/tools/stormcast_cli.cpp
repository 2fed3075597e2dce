#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "stormcast/core/errors.hpp"
#include "stormcast/pipeline/config.hpp"
#include "stormcast/pipeline/stages.hpp"

namespace sp = stormcast::pipeline;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Options {
  std::string config;
  std::string output_dir;
  bool per_step = false;
};

sp::RunConfig resolve(const Options& o) {
  sp::RunConfig c = o.config.empty() ? sp::RunConfig{} : sp::load_config(o.config);
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  if (o.per_step) c.windows.condition = stormcast::data::ConditionMode::kPerStep;
  sp::validate(c);
  return c;
}

void print_report(const sp::EvaluateResult& r) {
  for (const auto& rep : r.reports)
    for (const auto& g : rep.groups)
      std::printf("%-14s %-14s windows=%-4zu mae=%.5f rmse=%.5f crps=%.5f es=%.5f vs=%.5f\n", rep.model.c_str(),
                  g.group.c_str(), g.windows, g.mae, g.rmse, g.crps, g.es, g.vs);
  if (!r.missing.empty()) std::printf("%zu test windows had no samples and were excluded\n", r.missing.size());
}

int run(const std::string& command, const Options& o) {
  if (command == "print-config") {
    std::cout << sp::config_to_json(resolve(o)).dump(2) << '\n';
    return kOk;
  }
  sp::Pipeline p(resolve(o));
  if (command == "gen-data") {
    const auto r = p.gen_data();
    std::printf("gen-data: %zu farms (%.0f MW), %zu steps, %zu storms\n", r.farms, r.total_capacity_mw, r.steps,
                r.storms);
  } else if (command == "embed-train") {
    const auto r = p.embed_train();
    std::printf("embed-train: %zu triples, held-out hinge %.4f -> %.4f\n", r.triples, r.held_out_initial,
                r.held_out_final);
  } else if (command == "det-train") {
    const auto r = p.det_train();
    std::printf("det-train: val mse %.6f (nwp curve %.6f), test mse %.6f\n", r.val_mse, r.nwp_val_mse, r.test_mse);
    if (r.unconditioned_test_mse) std::printf("det-train: unconditioned test mse %.6f\n", *r.unconditioned_test_mse);
  } else if (command == "diff-train") {
    const auto r = p.diff_train();
    std::printf("diff-train: %zu examples, best val loss %.4f at epoch %zu\n", r.train_examples, r.best_val_loss,
                r.best_epoch);
  } else if (command == "train") {
    p.train();
    std::printf("train: checkpoints written under %s\n", p.paths().root.string().c_str());
  } else if (command == "sample") {
    const auto r = p.sample();
    std::printf("sample: %zu windows x %zu samples (%zu typhoon windows)\n", r.windows, r.samples_per_window,
                r.typhoon_windows);
  } else if (command == "evaluate") {
    print_report(p.evaluate());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Typhoon-conditioned probabilistic wind power forecasting"};
  app.require_subcommand(1);
  Options o;
  const char* commands[][2] = {
      {"gen-data", "Write a synthetic farm cluster, series and storm tracks"},
      {"embed-train", "Build the typhoon knowledge graph and train TransE embeddings"},
      {"det-train", "Train the deterministic forecaster"},
      {"diff-train", "Train the conditional denoiser on deterministic forecast errors"},
      {"train", "Run embed-train, det-train and diff-train in order"},
      {"sample", "Generate probabilistic forecasts for the test windows"},
      {"evaluate", "Score the samples against targets and baselines"},
      {"print-config", "Print the resolved configuration with defaults filled in"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    auto* cfg = sub->add_option("-c,--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    if (std::string(name) != "print-config") cfg->required();
    sub->add_option("-o,--output-dir", o.output_dir, "Override output_dir");
    sub->add_flag("--per-step-condition", o.per_step, "Condition each step on the storm position at that step");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, o);
  } catch (const stormcast::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kUsage;
  } catch (const stormcast::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
}
