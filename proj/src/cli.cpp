#include "flowcast/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "flowcast/checkpoint.hpp"
#include "flowcast/dtw.hpp"
#include "flowcast/errors.hpp"
#include "flowcast/io_csv.hpp"
#include "flowcast/manifest.hpp"
#include "flowcast/metrics.hpp"
#include "flowcast/model.hpp"
#include "flowcast/patterns.hpp"
#include "flowcast/train.hpp"

#include <json.hpp>

namespace flowcast::cli {

namespace fs = std::filesystem;

Paths::Paths(const std::string& dir) : out_dir(dir) {
  auto join = [&dir](const char* name) { return (fs::path(dir) / name).string(); };
  flow = join("flow.csv");
  edges = join("edges.csv");
  mask_geo = join("mask_geo.csv");
  mask_sem = join("mask_sem.csv");
  basis = join("basis.csv");
  patterns = join("patterns.csv");
  scaler = join("scaler.json");
  checkpoint = join("checkpoint.bin");
  sidecar = join("checkpoint.json");
  history = join("history.csv");
  attention = join("attention.jsonl");
}

std::string Paths::report_json(const std::string& split) const {
  return (fs::path(out_dir) / ("report_" + split + ".json")).string();
}
std::string Paths::report_csv(const std::string& split) const {
  return (fs::path(out_dir) / ("report_" + split + ".csv")).string();
}
std::string Paths::manifest(const std::string& command) const {
  return (fs::path(out_dir) / ("manifest_" + command + ".json")).string();
}

namespace {

struct DatasetSpec {
  std::string kind;  // "graph" or "grid" ("synthetic" resolves to "graph")
  std::string flow_file, edge_file;
  long grid_rows = 0, grid_cols = 0;
  long interval_minutes = 5;
  int start_week_index = 1;
  long start_day_slot = 0;
  long input_steps = 12, output_steps = 12;
  SplitRatios ratios;
};

DatasetSpec dataset_spec_from_config(const Config& config, const Paths& paths) {
  DatasetSpec spec;
  spec.kind = config.get_string("dataset_kind", "synthetic");
  if (spec.kind != "synthetic" && spec.kind != "graph" && spec.kind != "grid") {
    throw ConfigError("dataset_kind must be synthetic, graph, or grid");
  }
  spec.flow_file = config.get_string("flow_file", paths.flow);
  spec.edge_file = config.get_string("edge_file", paths.edges);
  spec.grid_rows = config.get_long("grid_rows", 0);
  spec.grid_cols = config.get_long("grid_cols", 0);
  spec.interval_minutes = config.get_long("interval_minutes", 5);
  spec.start_week_index = static_cast<int>(config.get_long("start_week_index", 1));
  spec.start_day_slot = config.get_long("start_day_slot", 0);
  spec.input_steps = config.get_long("input_steps", 12);
  spec.output_steps = config.get_long("output_steps", 12);
  spec.ratios.train = config.get_double("split_train", 0.6);
  spec.ratios.val = config.get_double("split_val", 0.2);
  spec.ratios.test = config.get_double("split_test", 0.2);
  if (spec.kind == "synthetic") spec.kind = "graph";
  if (spec.kind == "grid" && (spec.grid_rows < 1 || spec.grid_cols < 1)) {
    throw ConfigError("grid datasets need grid_rows and grid_cols");
  }
  return spec;
}

std::pair<TrafficTensor, RoadNetwork> load_dataset(const DatasetSpec& spec) {
  if (!fs::exists(spec.flow_file)) {
    throw DataError("dataset: flow file " + spec.flow_file +
                    " does not exist (run the synth command or point flow_file at data)");
  }
  if (spec.kind == "grid") {
    return load_grid_dataset(spec.flow_file, spec.grid_rows, spec.grid_cols,
                             spec.interval_minutes, spec.start_week_index, spec.start_day_slot);
  }
  if (!fs::exists(spec.edge_file)) {
    throw DataError("dataset: edge file " + spec.edge_file + " does not exist");
  }
  return load_graph_dataset(spec.flow_file, spec.edge_file, spec.interval_minutes,
                            spec.start_week_index, spec.start_day_slot);
}

ModelConfig model_config_from(const Config& config, const DatasetSpec& spec, long nodes,
                              long channels) {
  ModelConfig cfg;
  cfg.input_steps = spec.input_steps;
  cfg.output_steps = spec.output_steps;
  cfg.nodes = nodes;
  cfg.channels = channels;
  cfg.d = config.get_long("d", 16);
  cfg.d_sk = config.get_long("d_sk", 64);
  cfg.layers = config.get_long("layers", 2);
  cfg.h_geo = config.get_long("h_geo", 2);
  cfg.h_sem = config.get_long("h_sem", 1);
  cfg.h_t = config.get_long("h_t", 1);
  cfg.lambda_hops = config.get_long("lambda", 2);
  cfg.sem_neighbors = config.get_long("sem_neighbors", 3);
  cfg.n_patterns = config.get_long("n_patterns", 16);
  cfg.pattern_window = config.get_long("pattern_window", 3);
  cfg.laplacian_k = config.get_long("laplacian_k", 8);
  cfg.interval_minutes = spec.interval_minutes;
  cfg.seed = static_cast<unsigned long>(config.get_long("seed", 1));
  cfg.dropout = config.get_double("dropout", 0.0);
  cfg.delay_enabled = config.get_bool("delay_enabled", true);
  cfg.masks_enabled = config.get_bool("masks_enabled", true);
  return cfg;
}

void validate_before_compute(const Config& config) {
  // Cheap config-only checks so bad runs fail before touching data.
  HeadConfig heads{config.get_long("h_geo", 2), config.get_long("h_sem", 1),
                   config.get_long("h_t", 1), config.get_long("d", 16)};
  heads.validate();
  const long interval = config.get_long("interval_minutes", 5);
  if (interval <= 0 || 1440 % interval != 0) {
    throw ConfigError("interval_minutes must divide 1440");
  }
  const long d = config.get_long("d", 16);
  if (d % 2 != 0) throw ConfigError("d must be even");
}

PreprocessArtifacts load_artifacts(const Paths& paths) {
  for (const std::string* p :
       {&paths.mask_geo, &paths.mask_sem, &paths.basis, &paths.patterns, &paths.scaler}) {
    if (!fs::exists(*p)) {
      throw DataError("artifact " + *p + " is missing; run the preprocess command first");
    }
  }
  PreprocessArtifacts artifacts;
  artifacts.mask_geo = read_matrix_csv(paths.mask_geo);
  artifacts.mask_sem = read_matrix_csv(paths.mask_sem);
  artifacts.basis = read_matrix_csv(paths.basis);
  artifacts.patterns = read_patterns_csv(paths.patterns);
  artifacts.scaler = read_scaler_json(paths.scaler);
  return artifacts;
}

nlohmann::json dataset_to_json(const DatasetSpec& spec) {
  return {{"kind", spec.kind},
          {"flow_file", spec.flow_file},
          {"edge_file", spec.edge_file},
          {"grid_rows", spec.grid_rows},
          {"grid_cols", spec.grid_cols},
          {"interval_minutes", spec.interval_minutes},
          {"start_week_index", spec.start_week_index},
          {"start_day_slot", spec.start_day_slot},
          {"input_steps", spec.input_steps},
          {"output_steps", spec.output_steps},
          {"split_train", spec.ratios.train},
          {"split_val", spec.ratios.val},
          {"split_test", spec.ratios.test}};
}

DatasetSpec dataset_from_json(const nlohmann::json& j) {
  DatasetSpec spec;
  spec.kind = j.at("kind").get<std::string>();
  spec.flow_file = j.at("flow_file").get<std::string>();
  spec.edge_file = j.at("edge_file").get<std::string>();
  spec.grid_rows = j.at("grid_rows").get<long>();
  spec.grid_cols = j.at("grid_cols").get<long>();
  spec.interval_minutes = j.at("interval_minutes").get<long>();
  spec.start_week_index = j.at("start_week_index").get<int>();
  spec.start_day_slot = j.at("start_day_slot").get<long>();
  spec.input_steps = j.at("input_steps").get<long>();
  spec.output_steps = j.at("output_steps").get<long>();
  spec.ratios.train = j.at("split_train").get<double>();
  spec.ratios.val = j.at("split_val").get<double>();
  spec.ratios.test = j.at("split_test").get<double>();
  return spec;
}

void write_sidecar(const std::string& path, const ModelConfig& cfg, const DatasetSpec& spec,
                   const Paths& paths, const Scaler& scaler) {
  nlohmann::json j;
  j["tool_version"] = kToolVersion;
  j["model_config"] = {{"input_steps", cfg.input_steps},
                       {"output_steps", cfg.output_steps},
                       {"nodes", cfg.nodes},
                       {"channels", cfg.channels},
                       {"d", cfg.d},
                       {"d_sk", cfg.d_sk},
                       {"layers", cfg.layers},
                       {"h_geo", cfg.h_geo},
                       {"h_sem", cfg.h_sem},
                       {"h_t", cfg.h_t},
                       {"lambda", cfg.lambda_hops},
                       {"sem_neighbors", cfg.sem_neighbors},
                       {"n_patterns", cfg.n_patterns},
                       {"pattern_window", cfg.pattern_window},
                       {"laplacian_k", cfg.laplacian_k},
                       {"interval_minutes", cfg.interval_minutes},
                       {"seed", cfg.seed},
                       {"dropout", cfg.dropout},
                       {"delay_enabled", cfg.delay_enabled},
                       {"masks_enabled", cfg.masks_enabled}};
  j["dataset"] = dataset_to_json(spec);
  j["artifact_files"] = {{"mask_geo", paths.mask_geo},
                         {"mask_sem", paths.mask_sem},
                         {"basis", paths.basis},
                         {"patterns", paths.patterns},
                         {"scaler", paths.scaler}};
  j["scaler"] = {{"mean", scaler.mean},
                 {"stddev", scaler.stddev},
                 {"degenerate", scaler.degenerate}};
  std::ofstream out(path);
  if (!out) throw DataError("sidecar: cannot open " + path);
  out << j.dump(2) << "\n";
}

struct Sidecar {
  ModelConfig cfg;
  DatasetSpec spec;
  std::string mask_geo, mask_sem, basis, patterns, scaler;
};

Sidecar read_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("sidecar: cannot open " + path + "; run the train command first");
  nlohmann::json j;
  try {
    in >> j;
    Sidecar side;
    const auto& m = j.at("model_config");
    side.cfg.input_steps = m.at("input_steps").get<long>();
    side.cfg.output_steps = m.at("output_steps").get<long>();
    side.cfg.nodes = m.at("nodes").get<long>();
    side.cfg.channels = m.at("channels").get<long>();
    side.cfg.d = m.at("d").get<long>();
    side.cfg.d_sk = m.at("d_sk").get<long>();
    side.cfg.layers = m.at("layers").get<long>();
    side.cfg.h_geo = m.at("h_geo").get<long>();
    side.cfg.h_sem = m.at("h_sem").get<long>();
    side.cfg.h_t = m.at("h_t").get<long>();
    side.cfg.lambda_hops = m.at("lambda").get<long>();
    side.cfg.sem_neighbors = m.at("sem_neighbors").get<long>();
    side.cfg.n_patterns = m.at("n_patterns").get<long>();
    side.cfg.pattern_window = m.at("pattern_window").get<long>();
    side.cfg.laplacian_k = m.at("laplacian_k").get<long>();
    side.cfg.interval_minutes = m.at("interval_minutes").get<long>();
    side.cfg.seed = m.at("seed").get<unsigned long>();
    side.cfg.dropout = m.at("dropout").get<double>();
    side.cfg.delay_enabled = m.at("delay_enabled").get<bool>();
    side.cfg.masks_enabled = m.at("masks_enabled").get<bool>();
    side.spec = dataset_from_json(j.at("dataset"));
    const auto& a = j.at("artifact_files");
    side.mask_geo = a.at("mask_geo").get<std::string>();
    side.mask_sem = a.at("mask_sem").get<std::string>();
    side.basis = a.at("basis").get<std::string>();
    side.patterns = a.at("patterns").get<std::string>();
    side.scaler = a.at("scaler").get<std::string>();
    return side;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("sidecar: " + path + ": " + e.what());
  }
}

TrainConfig train_config_from(const Config& config) {
  TrainConfig cfg;
  cfg.lr = config.get_double("lr", 0.001);
  cfg.batch_size = config.get_long("batch_size", 16);
  cfg.max_epochs = config.get_long("max_epochs", 200);
  cfg.patience = config.get_long("patience", 20);
  cfg.seed = static_cast<unsigned long>(config.get_long("seed", 1));
  cfg.grad_clip_norm = config.get_double("grad_clip_norm", 5.0);
  const std::string loss = config.get_string("loss", "mae");
  if (loss == "mae") {
    cfg.loss_kind = LossKind::MaskedMae;
  } else if (loss == "huber") {
    cfg.loss_kind = LossKind::MaskedHuber;
  } else {
    throw ConfigError("loss must be mae or huber, got '" + loss + "'");
  }
  cfg.huber_delta = config.get_double("huber_delta", 1.0);
  cfg.weight_decay = config.get_double("weight_decay", 0.01);
  cfg.max_steps = config.get_long("max_steps", 0);
  cfg.shuffle = config.get_bool("shuffle", true);
  return cfg;
}

Model rebuild_model(const Sidecar& side) {
  PreprocessArtifacts artifacts;
  artifacts.mask_geo = read_matrix_csv(side.mask_geo);
  artifacts.mask_sem = read_matrix_csv(side.mask_sem);
  artifacts.basis = read_matrix_csv(side.basis);
  artifacts.patterns = read_patterns_csv(side.patterns);
  artifacts.scaler = read_scaler_json(side.scaler);
  return Model(side.cfg, std::move(artifacts));
}

}  // namespace

int run_synth(const Config& config) {
  const Paths paths(config.get_string("out_dir", "run"));
  fs::create_directories(paths.out_dir);
  const long nodes = config.get_long("synth_nodes", 6);
  const long days = config.get_long("synth_days", 3);
  const long interval = config.get_long("interval_minutes", 5);
  const long delay = config.get_long("synth_delay_steps", 2);
  const double noise = config.get_double("synth_noise_sigma", 0.05);
  const unsigned long seed = static_cast<unsigned long>(config.get_long("seed", 1));

  auto [tensor, net] = generate_synthetic(nodes, days, interval, delay, noise, seed);
  write_flow_file(paths.flow, tensor);
  write_edge_list(paths.edges, net);
  write_manifest(paths.manifest("synth"), "synth", config, seed, {}, {paths.flow, paths.edges});
  std::cout << "synth: wrote " << paths.flow << " (" << tensor.steps() << " steps, "
            << tensor.nodes() << " nodes) and " << paths.edges << "\n";
  return 0;
}

int run_preprocess(const Config& config) {
  validate_before_compute(config);
  const Paths paths(config.get_string("out_dir", "run"));
  fs::create_directories(paths.out_dir);
  const DatasetSpec spec = dataset_spec_from_config(config, paths);
  auto [tensor, net] = load_dataset(spec);

  const auto samples = make_samples(tensor, spec.input_steps, spec.output_steps);
  const SampleSplit splits = split_samples(samples, spec.ratios);
  const long step_limit = training_step_limit(static_cast<long>(splits.train.size()),
                                              spec.input_steps, spec.output_steps);

  const long lambda = config.get_long("lambda", 2);
  const long k_sem = config.get_long("sem_neighbors", 3);
  const long n_patterns = config.get_long("n_patterns", 16);
  const long pattern_window = config.get_long("pattern_window", 3);
  const long laplacian_k = config.get_long("laplacian_k", 8);
  const unsigned long seed = static_cast<unsigned long>(config.get_long("seed", 1));

  const Tensor mask_geo = geographic_mask(hop_distances(net), lambda);
  const SemanticMask mask_sem = semantic_mask(mean_daily_profiles(tensor, step_limit), k_sem);
  const LaplacianEmbeddingBasis basis = laplacian_embedding_basis(net, laplacian_k);

  std::vector<std::vector<double>> windows;
  for (long c = 0; c < tensor.channels(); ++c) {
    auto channel_windows = extract_windows(tensor, pattern_window, c, step_limit);
    for (auto& w : channel_windows) windows.push_back(std::move(w));
  }
  const KShapeResult clusters = kshape_cluster(windows, n_patterns, seed);
  const Scaler scaler = fit_scaler(tensor, step_limit);

  write_matrix_csv(paths.mask_geo, mask_geo);
  write_matrix_csv(paths.mask_sem, mask_sem.mask);
  write_matrix_csv(paths.basis, basis.vectors);
  write_patterns_csv(paths.patterns, clusters.patterns);
  write_scaler_json(paths.scaler, scaler);

  std::vector<std::string> inputs = {spec.flow_file};
  if (spec.kind == "graph") inputs.push_back(spec.edge_file);
  write_manifest(paths.manifest("preprocess"), "preprocess", config, seed, inputs,
                 {paths.mask_geo, paths.mask_sem, paths.basis, paths.patterns, paths.scaler});
  std::cout << "preprocess: wrote masks, basis, patterns, scaler under " << paths.out_dir
            << "\n";
  return 0;
}

int run_train(const Config& config) {
  validate_before_compute(config);
  const Paths paths(config.get_string("out_dir", "run"));
  const DatasetSpec spec = dataset_spec_from_config(config, paths);
  auto [tensor, net] = load_dataset(spec);
  PreprocessArtifacts artifacts = load_artifacts(paths);

  ModelConfig model_cfg = model_config_from(config, spec, tensor.nodes(), tensor.channels());
  Model model(model_cfg, std::move(artifacts));

  const SampleSplit splits =
      split_samples(make_samples(tensor, spec.input_steps, spec.output_steps), spec.ratios);

  const TrainConfig train_cfg = train_config_from(config);
  std::vector<std::string> artifact_files = {paths.checkpoint, paths.sidecar, paths.history};

  if (train_cfg.max_epochs == 0) {
    save_checkpoint(model.params(), paths.checkpoint);
    write_sidecar(paths.sidecar, model_cfg, spec, paths, model.artifacts().scaler);
    write_history_csv(paths.history, {});
    write_manifest(paths.manifest("train"), "train", config, train_cfg.seed,
                   {spec.flow_file}, artifact_files);
    std::cout << "train: epochs=0, wrote initialized checkpoint to " << paths.checkpoint << "\n";
    return 0;
  }

  const TrainResult result = train(model, splits, train_cfg);
  save_checkpoint(model.params(), paths.checkpoint);
  write_sidecar(paths.sidecar, model_cfg, spec, paths, model.artifacts().scaler);
  write_history_csv(paths.history, result.history);
  write_manifest(paths.manifest("train"), "train", config, train_cfg.seed, {spec.flow_file},
                 artifact_files);

  if (result.diverged) {
    throw NumericError("training diverged (NaN loss); last good checkpoint saved to " +
                       paths.checkpoint);
  }
  if (result.best_epoch >= 0) {
    const EpochStats& best = result.history[static_cast<size_t>(result.best_epoch - 1)];
    std::cout << "train: best epoch " << result.best_epoch << " val_mae " << best.val_mae
              << " val_rmse " << best.val_rmse << " val_mape " << best.val_mape << " (steps "
              << result.steps_taken << ")\n";
  }
  return 0;
}

int run_evaluate(const Config& config, const std::string& split_name) {
  const Paths paths(config.get_string("out_dir", "run"));
  const std::string checkpoint_path = config.get_string("checkpoint", paths.checkpoint);
  const Sidecar side = read_sidecar(
      config.get_string("sidecar", fs::path(checkpoint_path).replace_extension(".json").string()));
  Model model = rebuild_model(side);
  load_checkpoint(model.params(), checkpoint_path);

  auto [tensor, net] = load_dataset(side.spec);
  const SampleSplit splits = split_samples(
      make_samples(tensor, side.spec.input_steps, side.spec.output_steps), side.spec.ratios);
  const std::vector<Sample>* samples = nullptr;
  if (split_name == "train") {
    samples = &splits.train;
  } else if (split_name == "val") {
    samples = &splits.val;
  } else if (split_name == "test") {
    samples = &splits.test;
  } else {
    throw ConfigError("evaluate: split must be train, val, or test, got '" + split_name + "'");
  }

  EvalOptions opts;
  opts.flow_filter_threshold = config.get_double("flow_filter_threshold", -1.0);
  EvalAccumulator acc(opts);
  for (const Sample& sample : *samples) {
    acc.add(model.predict_denormalized(sample), sample.target_raw, sample.target_missing);
  }
  const EvalReport report = acc.finalize();

  {
    std::ofstream out(paths.report_json(split_name));
    if (!out) throw DataError("evaluate: cannot open " + paths.report_json(split_name));
    out << eval_report_to_json(report) << "\n";
  }
  {
    std::ofstream out(paths.report_csv(split_name));
    if (!out) throw DataError("evaluate: cannot open " + paths.report_csv(split_name));
    out << eval_report_to_csv(report);
  }
  write_manifest(paths.manifest("evaluate_" + split_name), "evaluate", config, side.cfg.seed,
                 {checkpoint_path, side.spec.flow_file},
                 {paths.report_json(split_name), paths.report_csv(split_name)});
  std::cout << "evaluate[" << split_name << "]: mae " << report.overall.mae << " rmse "
            << report.overall.rmse << " mape " << report.overall.mape_percent << " over "
            << report.overall.count << " points\n";
  return 0;
}

int run_export_attention(const Config& config, long sample_index) {
  const Paths paths(config.get_string("out_dir", "run"));
  const std::string checkpoint_path = config.get_string("checkpoint", paths.checkpoint);
  const Sidecar side = read_sidecar(
      config.get_string("sidecar", fs::path(checkpoint_path).replace_extension(".json").string()));
  Model model = rebuild_model(side);
  load_checkpoint(model.params(), checkpoint_path);

  auto [tensor, net] = load_dataset(side.spec);
  const auto samples = make_samples(tensor, side.spec.input_steps, side.spec.output_steps);
  if (sample_index < 0 || sample_index >= static_cast<long>(samples.size())) {
    throw DataError("export-attention: sample index " + std::to_string(sample_index) +
                    " out of range [0, " + std::to_string(samples.size()) + ")");
  }

  AttentionCapture capture;
  model.forward(samples[static_cast<size_t>(sample_index)], nullptr, &capture);

  std::ofstream out(paths.attention);
  if (!out) throw DataError("export-attention: cannot open " + paths.attention);
  for (const AttentionEntry& entry : capture) {
    nlohmann::json j;
    j["layer"] = entry.layer;
    j["head_kind"] = entry.head_kind;
    j["head_index"] = entry.head_index;
    j["slice_or_node"] = entry.slice_or_node;
    nlohmann::json rows = nlohmann::json::array();
    for (long i = 0; i < entry.matrix.dim(0); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (long jx = 0; jx < entry.matrix.dim(1); ++jx) row.push_back(entry.matrix.at(i, jx));
      rows.push_back(std::move(row));
    }
    j["matrix"] = std::move(rows);
    out << j.dump() << "\n";
  }
  std::cout << "export-attention: wrote " << capture.size() << " maps for sample "
            << sample_index << " to " << paths.attention << "\n";
  return 0;
}

}  // namespace flowcast::cli
