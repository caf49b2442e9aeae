#include "flowcast/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "flowcast/errors.hpp"

namespace flowcast {

namespace {

void validate_interval(long interval_minutes) {
  if (interval_minutes <= 0 || 1440 % interval_minutes != 0) {
    throw ConfigError("interval_minutes must divide 1440, got " +
                      std::to_string(interval_minutes));
  }
}

double parse_value(std::string_view field, const std::string& path, long line_no) {
  // Trim spaces; accept "nan" (any case) as missing.
  size_t b = field.find_first_not_of(" \t\r");
  size_t e = field.find_last_not_of(" \t\r");
  if (b == std::string_view::npos) {
    throw DataError(path + ":" + std::to_string(line_no) + ": empty value field");
  }
  field = field.substr(b, e - b + 1);
  if (field == "nan" || field == "NaN" || field == "NAN") {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw DataError(path + ":" + std::to_string(line_no) + ": bad number '" +
                    std::string(field) + "'");
  }
  return v;
}

}  // namespace

TrafficTensor read_flow_file(const std::string& path, long interval_minutes, int start_week_index,
                             long start_day_slot) {
  validate_interval(interval_minutes);
  if (start_week_index < 1 || start_week_index > 7) {
    throw ConfigError("start_week_index must be in 1..7");
  }
  std::ifstream in(path);
  if (!in) throw DataError("read_flow_file: cannot open " + path);

  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw DataError("read_flow_file: " + path + " is empty");
  }
  long t_total = 0, n_nodes = 0, n_channels = 0;
  {
    std::istringstream hs(line);
    char c1 = 0, c2 = 0;
    if (!(hs >> t_total >> c1 >> n_nodes >> c2 >> n_channels) || c1 != ',' || c2 != ',') {
      throw DataError("read_flow_file: " + path + ": bad header '" + line + "', expected T,N,C");
    }
  }
  if (t_total <= 0 || n_nodes <= 0 || n_channels <= 0) {
    throw DataError("read_flow_file: " + path + ": non-positive dimension in header");
  }

  TrafficTensor tensor;
  tensor.interval_minutes = interval_minutes;
  tensor.start_week_index = start_week_index;
  tensor.start_day_slot = start_day_slot % (1440 / interval_minutes);
  tensor.values = Tensor({t_total, n_nodes, n_channels});
  tensor.missing.assign(static_cast<size_t>(tensor.values.size()), 0);

  const long row_width = n_nodes * n_channels;
  for (long t = 0; t < t_total; ++t) {
    if (!std::getline(in, line)) {
      throw DataError("read_flow_file: " + path + ": expected " + std::to_string(t_total) +
                      " rows, found " + std::to_string(t));
    }
    long col = 0;
    size_t pos = 0;
    while (col < row_width) {
      size_t comma = line.find(',', pos);
      std::string_view field(line.data() + pos,
                             (comma == std::string::npos ? line.size() : comma) - pos);
      const double v = parse_value(field, path, t + 2);
      const long flat = t * row_width + col;
      if (std::isnan(v)) {
        tensor.missing[static_cast<size_t>(flat)] = 1;
        tensor.values[flat] = 0.0;
      } else {
        tensor.values[flat] = v;
      }
      ++col;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (col != row_width) {
      throw DataError("read_flow_file: " + path + ":" + std::to_string(t + 2) + ": row has " +
                      std::to_string(col) + " values, expected " + std::to_string(row_width));
    }
  }
  return tensor;
}

void write_flow_file(const std::string& path, const TrafficTensor& tensor) {
  std::ofstream out(path);
  if (!out) throw DataError("write_flow_file: cannot open " + path);
  const long t_total = tensor.steps(), n = tensor.nodes(), c = tensor.channels();
  out << t_total << "," << n << "," << c << "\n";
  char buf[64];
  for (long t = 0; t < t_total; ++t) {
    std::string row;
    for (long j = 0; j < n * c; ++j) {
      if (j) row.push_back(',');
      const long flat = t * n * c + j;
      if (tensor.missing[static_cast<size_t>(flat)]) {
        row += "nan";
      } else {
        const int len = std::snprintf(buf, sizeof buf, "%.17g", tensor.values[flat]);
        row.append(buf, static_cast<size_t>(len));
      }
    }
    row.push_back('\n');
    out << row;
  }
}

std::pair<TrafficTensor, RoadNetwork> load_graph_dataset(const std::string& flow_file,
                                                         const std::string& edge_file,
                                                         long interval_minutes,
                                                         int start_week_index,
                                                         long start_day_slot) {
  TrafficTensor tensor =
      read_flow_file(flow_file, interval_minutes, start_week_index, start_day_slot);
  const auto edges = read_edge_list(edge_file);
  RoadNetwork net = build_from_edge_list(tensor.nodes(), edges);
  return {std::move(tensor), std::move(net)};
}

std::pair<TrafficTensor, RoadNetwork> load_grid_dataset(const std::string& flow_file, long rows,
                                                        long cols, long interval_minutes,
                                                        int start_week_index,
                                                        long start_day_slot) {
  TrafficTensor tensor =
      read_flow_file(flow_file, interval_minutes, start_week_index, start_day_slot);
  if (tensor.nodes() != rows * cols) {
    throw DataError("load_grid_dataset: flow file has " + std::to_string(tensor.nodes()) +
                    " nodes but grid is " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  return {std::move(tensor), grid_to_graph(rows, cols)};
}

std::vector<Sample> make_samples(const TrafficTensor& tensor, long input_steps,
                                 long output_steps) {
  const long t_total = tensor.steps();
  if (input_steps < 1 || output_steps < 1) {
    throw ConfigError("make_samples: horizons must be >= 1");
  }
  if (t_total < input_steps + output_steps) {
    throw DataError("make_samples: series of " + std::to_string(t_total) +
                    " steps cannot produce windows of " +
                    std::to_string(input_steps + output_steps));
  }
  const long n = tensor.nodes(), c = tensor.channels();
  const long count = t_total - input_steps - output_steps + 1;
  std::vector<Sample> samples;
  samples.reserve(static_cast<size_t>(count));
  const long row = n * c;
  for (long i = 0; i < count; ++i) {
    Sample s;
    s.start_step = i;
    s.input_raw = Tensor({input_steps, n, c});
    s.target_raw = Tensor({output_steps, n, c});
    s.input_missing.resize(static_cast<size_t>(input_steps * row));
    s.target_missing.resize(static_cast<size_t>(output_steps * row));
    for (long t = 0; t < input_steps; ++t) {
      const long src = (i + t) * row;
      for (long j = 0; j < row; ++j) {
        s.input_raw[t * row + j] = tensor.values[src + j];
        s.input_missing[static_cast<size_t>(t * row + j)] = tensor.missing[static_cast<size_t>(src + j)];
      }
      s.meta.week.push_back(tensor.week_index(i + t));
      s.meta.slot.push_back(tensor.day_slot(i + t));
      s.meta.abs_step.push_back(i + t);
    }
    for (long t = 0; t < output_steps; ++t) {
      const long src = (i + input_steps + t) * row;
      for (long j = 0; j < row; ++j) {
        s.target_raw[t * row + j] = tensor.values[src + j];
        s.target_missing[static_cast<size_t>(t * row + j)] = tensor.missing[static_cast<size_t>(src + j)];
      }
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

SampleSplit split_samples(std::vector<Sample> samples, const SplitRatios& ratios) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw ConfigError("split_samples: ratios sum to " + std::to_string(sum) + ", expected 1");
  }
  const long n = static_cast<long>(samples.size());
  const long n_val = static_cast<long>(std::floor(ratios.val * static_cast<double>(n)));
  const long n_test = static_cast<long>(std::floor(ratios.test * static_cast<double>(n)));
  const long n_train = n - n_val - n_test;
  if (n_train <= 0 || n_val <= 0 || n_test <= 0) {
    throw DataError("split_samples: empty split (train=" + std::to_string(n_train) + ", val=" +
                    std::to_string(n_val) + ", test=" + std::to_string(n_test) + ")");
  }
  SampleSplit out;
  out.train.assign(std::make_move_iterator(samples.begin()),
                   std::make_move_iterator(samples.begin() + n_train));
  out.val.assign(std::make_move_iterator(samples.begin() + n_train),
                 std::make_move_iterator(samples.begin() + n_train + n_val));
  out.test.assign(std::make_move_iterator(samples.begin() + n_train + n_val),
                  std::make_move_iterator(samples.end()));
  return out;
}

long training_step_limit(long train_sample_count, long input_steps, long output_steps) {
  return train_sample_count - 1 + input_steps + output_steps;
}

Scaler fit_scaler(const TrafficTensor& tensor, long step_limit) {
  const long c = tensor.channels();
  const long limit = std::min(step_limit, tensor.steps());
  Scaler scaler;
  scaler.mean.assign(static_cast<size_t>(c), 0.0);
  scaler.stddev.assign(static_cast<size_t>(c), 1.0);
  scaler.degenerate.assign(static_cast<size_t>(c), 0);
  for (long ch = 0; ch < c; ++ch) {
    double sum = 0.0, sq = 0.0;
    long count = 0;
    for (long t = 0; t < limit; ++t) {
      for (long n = 0; n < tensor.nodes(); ++n) {
        if (tensor.is_missing(t, n, ch)) continue;
        const double v = tensor.values.at(t, n, ch);
        sum += v;
        sq += v * v;
        ++count;
      }
    }
    if (count == 0) {
      scaler.degenerate[static_cast<size_t>(ch)] = 1;
      continue;
    }
    const double mean = sum / static_cast<double>(count);
    const double var = std::max(0.0, sq / static_cast<double>(count) - mean * mean);
    scaler.mean[static_cast<size_t>(ch)] = mean;
    if (var < 1e-18) {
      scaler.degenerate[static_cast<size_t>(ch)] = 1;
    } else {
      scaler.stddev[static_cast<size_t>(ch)] = std::sqrt(var);
    }
  }
  return scaler;
}

std::pair<TrafficTensor, RoadNetwork> generate_synthetic(long n_nodes, long days,
                                                         long interval_minutes, long delay_steps,
                                                         double noise_sigma, unsigned long seed) {
  validate_interval(interval_minutes);
  if (n_nodes < 2) throw ConfigError("generate_synthetic: need at least 2 nodes");
  if (days < 1) throw ConfigError("generate_synthetic: need at least 1 day");
  if (delay_steps < 0) throw ConfigError("generate_synthetic: delay_steps must be >= 0");

  const long spd = 1440 / interval_minutes;
  const long t_total = days * spd;
  const long lead = (n_nodes - 1) * delay_steps;

  // One base series extended into the past; node i reads it with an
  // i*delay_steps lag, so downstream nodes repeat upstream flow exactly.
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sigma);
  std::vector<double> base(static_cast<size_t>(t_total + lead));
  for (long j = 0; j < t_total + lead; ++j) {
    const long slot = ((j - lead) % spd + spd) % spd;
    const double hour = static_cast<double>(slot) * static_cast<double>(interval_minutes) / 60.0;
    const double morning = 30.0 * std::exp(-0.5 * std::pow((hour - 8.5) / 1.5, 2.0));
    const double evening = 25.0 * std::exp(-0.5 * std::pow((hour - 18.0) / 2.0, 2.0));
    double v = 8.0 + morning + evening;
    if (noise_sigma > 0.0) v += noise(rng);
    base[static_cast<size_t>(j)] = std::max(0.0, v);
  }

  TrafficTensor tensor;
  tensor.interval_minutes = interval_minutes;
  tensor.values = Tensor({t_total, n_nodes, 1});
  tensor.missing.assign(static_cast<size_t>(tensor.values.size()), 0);
  for (long t = 0; t < t_total; ++t) {
    for (long i = 0; i < n_nodes; ++i) {
      tensor.values.at(t, i, 0) = base[static_cast<size_t>(t + (n_nodes - 1 - i) * delay_steps)];
    }
  }

  std::vector<std::pair<long, long>> edges;
  for (long i = 0; i < n_nodes; ++i) {
    const long j = (i + 1) % n_nodes;
    edges.emplace_back(i, j);
    edges.emplace_back(j, i);
  }
  return {std::move(tensor), build_from_edge_list(n_nodes, edges)};
}

}  // namespace flowcast
