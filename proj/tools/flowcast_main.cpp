#include <iostream>
#include <string>

#include "flowcast/cli.hpp"
#include "flowcast/config.hpp"
#include "flowcast/errors.hpp"
#include "flowcast/manifest.hpp"

#include <CLI11.hpp>

namespace {

struct GlobalFlags {
  std::string config_path;
  std::string out_dir;
  long seed = -1;
};

flowcast::Config resolve_config(const GlobalFlags& flags) {
  flowcast::Config config;
  if (!flags.config_path.empty()) config = flowcast::Config::load(flags.config_path);
  if (!flags.out_dir.empty()) config.set("out_dir", flags.out_dir);
  if (flags.seed >= 0) config.set("seed", std::to_string(flags.seed));
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowcast: spatial-temporal traffic flow forecasting pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand name
  app.set_version_flag("--version", flowcast::kToolVersion);

  GlobalFlags flags;
  app.add_option("--config", flags.config_path, "Flat key=value config file");
  app.add_option("--out-dir", flags.out_dir, "Output directory (overrides config)");
  app.add_option("--seed", flags.seed, "Run seed (overrides config)");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic ring dataset");
  auto* preprocess =
      app.add_subcommand("preprocess", "Build masks, embedding basis, patterns, scaler");
  auto* train = app.add_subcommand("train", "Train a model from preprocess artifacts");
  long epochs_override = -1;
  train->add_option("--epochs", epochs_override, "Override max_epochs (0 = init only)");

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a split");
  std::string split = "test";
  double filter_threshold = -2.0;
  std::string checkpoint_path;
  evaluate->add_option("--split", split, "train, val, or test")->capture_default_str();
  evaluate->add_option("--filter-threshold", filter_threshold,
                       "Drop points with truth below this value (grid-style)");
  evaluate->add_option("--checkpoint", checkpoint_path, "Checkpoint file");

  auto* export_attention =
      app.add_subcommand("export-attention", "Dump attention maps for one sample");
  long sample_index = 0;
  export_attention->add_option("--sample", sample_index, "Sample index")->capture_default_str();
  export_attention->add_option("--checkpoint", checkpoint_path, "Checkpoint file");

  CLI11_PARSE(app, argc, argv);

  try {
    flowcast::Config config = resolve_config(flags);
    if (synth->parsed()) return flowcast::cli::run_synth(config);
    if (preprocess->parsed()) return flowcast::cli::run_preprocess(config);
    if (train->parsed()) {
      if (epochs_override >= 0) config.set("max_epochs", std::to_string(epochs_override));
      return flowcast::cli::run_train(config);
    }
    if (evaluate->parsed()) {
      if (filter_threshold > -2.0) {
        config.set("flow_filter_threshold", std::to_string(filter_threshold));
      }
      if (!checkpoint_path.empty()) config.set("checkpoint", checkpoint_path);
      return flowcast::cli::run_evaluate(config, split);
    }
    if (export_attention->parsed()) {
      if (!checkpoint_path.empty()) config.set("checkpoint", checkpoint_path);
      return flowcast::cli::run_export_attention(config, sample_index);
    }
  } catch (const flowcast::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const flowcast::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const flowcast::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
