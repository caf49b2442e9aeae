#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "flowcast/graph.hpp"
#include "flowcast/tensor.hpp"

namespace flowcast {

/// Dense (time, node, channel) flow tensor with per-entry missing flags.
/// The start of the series is pinned by a week index (1..7) and a day slot
/// so periodic indices can be derived for any step.
struct TrafficTensor {
  Tensor values;  // (T_total, N, C)
  std::vector<std::uint8_t> missing;
  long interval_minutes = 5;
  int start_week_index = 1;  // 1..7, Monday = 1 by convention
  long start_day_slot = 0;

  long steps() const { return values.rank() == 3 ? values.dim(0) : 0; }
  long nodes() const { return values.rank() == 3 ? values.dim(1) : 0; }
  long channels() const { return values.rank() == 3 ? values.dim(2) : 0; }
  long slots_per_day() const { return 1440 / interval_minutes; }

  bool is_missing(long t, long n, long c) const {
    return missing[static_cast<size_t>((t * nodes() + n) * channels() + c)] != 0;
  }
  int week_index(long t) const {
    const long days = (start_day_slot + t) / slots_per_day();
    return static_cast<int>(((start_week_index - 1) + days) % 7) + 1;
  }
  long day_slot(long t) const { return (start_day_slot + t) % slots_per_day(); }
};

/// Periodic indices for the steps of one input window.
struct TimeMeta {
  std::vector<int> week;       // 1..7
  std::vector<long> slot;      // 0..slots_per_day-1
  std::vector<long> abs_step;  // index into the source tensor
};

struct Sample {
  Tensor input_raw;   // (T, N, C) flow units
  Tensor target_raw;  // (T', N, C)
  std::vector<std::uint8_t> input_missing;
  std::vector<std::uint8_t> target_missing;
  TimeMeta meta;
  long start_step = 0;
};

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct SampleSplit {
  std::vector<Sample> train, val, test;
};

/// Per-channel z-score statistics from the training split. A zero spread
/// is replaced by 1 and flagged.
struct Scaler {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<std::uint8_t> degenerate;

  double normalize(double v, long c) const { return (v - mean[static_cast<size_t>(c)]) / stddev[static_cast<size_t>(c)]; }
  double denormalize(double v, long c) const { return v * stddev[static_cast<size_t>(c)] + mean[static_cast<size_t>(c)]; }
};

/// Flow file: plain text, header "T,N,C", then one row per timestep with
/// N*C comma-separated values, channel-fastest. "nan" marks missing.
TrafficTensor read_flow_file(const std::string& path, long interval_minutes, int start_week_index,
                             long start_day_slot);
void write_flow_file(const std::string& path, const TrafficTensor& tensor);

std::pair<TrafficTensor, RoadNetwork> load_graph_dataset(const std::string& flow_file,
                                                         const std::string& edge_file,
                                                         long interval_minutes,
                                                         int start_week_index,
                                                         long start_day_slot);

std::pair<TrafficTensor, RoadNetwork> load_grid_dataset(const std::string& flow_file, long rows,
                                                        long cols, long interval_minutes,
                                                        int start_week_index, long start_day_slot);

/// Stride-1 sliding windows: input covers [i, i+T), target [i+T, i+T+T').
std::vector<Sample> make_samples(const TrafficTensor& tensor, long input_steps,
                                 long output_steps);

/// Chronological contiguous split; val/test sized by floor, remainder to
/// training. Rejects empty splits.
SampleSplit split_samples(std::vector<Sample> samples, const SplitRatios& ratios);

/// Number of leading source steps touched by the training samples; the
/// range preprocessing statistics may legally see.
long training_step_limit(long train_sample_count, long input_steps, long output_steps);

Scaler fit_scaler(const TrafficTensor& tensor, long step_limit);

/// Ring-of-N synthetic dataset: node 0 emits a noisy daily double-peak
/// profile and node i repeats node i-1 delayed by delay_steps.
std::pair<TrafficTensor, RoadNetwork> generate_synthetic(long n_nodes, long days,
                                                         long interval_minutes, long delay_steps,
                                                         double noise_sigma, unsigned long seed);

}  // namespace flowcast
