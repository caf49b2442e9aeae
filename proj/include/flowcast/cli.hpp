#pragma once

#include <string>

#include "flowcast/config.hpp"

namespace flowcast::cli {

/// Command entry points shared by the binary and the test suites. Each
/// returns a process exit code; typed errors (ConfigError, DataError,
/// NumericError) propagate to the caller for exit-code mapping.
int run_synth(const Config& config);
int run_preprocess(const Config& config);
int run_train(const Config& config);
int run_evaluate(const Config& config, const std::string& split_name);
int run_export_attention(const Config& config, long sample_index);

/// Artifact locations under an output directory.
struct Paths {
  explicit Paths(const std::string& out_dir);
  std::string out_dir;
  std::string flow, edges;
  std::string mask_geo, mask_sem, basis, patterns, scaler;
  std::string checkpoint, sidecar, history;
  std::string attention;
  std::string report_json(const std::string& split) const;
  std::string report_csv(const std::string& split) const;
  std::string manifest(const std::string& command) const;
};

}  // namespace flowcast::cli
