#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowcast/tensor.hpp"

namespace flowcast {

struct MetricCell {
  double mae = 0.0;
  double mape_percent = 0.0;
  double rmse = 0.0;
  long count = 0;       // points behind MAE/RMSE
  long mape_count = 0;  // points behind MAPE (zero truths excluded)
};

/// Masked MAE / MAPE / RMSE per horizon step and channel, plus overall.
struct EvalReport {
  long horizons = 0;
  long channels = 0;
  std::vector<MetricCell> per_horizon_channel;  // horizons * channels, row-major
  MetricCell overall;

  const MetricCell& at(long horizon, long channel) const {
    return per_horizon_channel[static_cast<size_t>(horizon * channels + channel)];
  }
};

struct EvalOptions {
  /// When >= 0, points with truth below the threshold are dropped from all
  /// three metrics (grid-style evaluation); negative disables filtering.
  double flow_filter_threshold = -1.0;
};

/// Streams (prediction, truth) pairs shaped (T', ..., C) and aggregates
/// masked metrics. Entries with missing truth are skipped; a retained zero
/// truth is excluded from MAPE only.
class EvalAccumulator {
 public:
  explicit EvalAccumulator(EvalOptions opts = {}) : opts_(opts) {}

  void add(const Tensor& pred, const Tensor& truth,
           const std::vector<std::uint8_t>& truth_missing);

  /// Rejects evaluations that retained no points at all.
  EvalReport finalize() const;

 private:
  struct Cell {
    double abs_sum = 0.0, sq_sum = 0.0, ape_sum = 0.0;
    long count = 0, mape_count = 0;
  };
  EvalOptions opts_;
  long horizons_ = 0, channels_ = 0;
  std::vector<Cell> cells_;
};

/// One-shot evaluation of a single tensor pair.
EvalReport evaluate(const Tensor& pred, const Tensor& truth,
                    const std::vector<std::uint8_t>& truth_missing, const EvalOptions& opts);

std::string eval_report_to_json(const EvalReport& report);
std::string eval_report_to_csv(const EvalReport& report);

}  // namespace flowcast
