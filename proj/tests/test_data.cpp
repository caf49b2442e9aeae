#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>

#include "flowcast/data.hpp"
#include "flowcast/errors.hpp"

using namespace flowcast;

namespace {

const char* kFlowPath = "/tmp/flowcast_test_flow.csv";
const char* kEdgePath = "/tmp/flowcast_test_data_edges.csv";

void write_file(const char* path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

}  // namespace

TEST_CASE("flow file io") {
  SUBCASE("write/read round trip is identical") {
    TrafficTensor t;
    t.interval_minutes = 30;
    t.start_week_index = 3;
    t.start_day_slot = 5;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> dist(0.0, 50.0);
    t.values = Tensor({6, 2, 2});
    for (long i = 0; i < t.values.size(); ++i) t.values[i] = dist(rng);
    t.missing.assign(static_cast<size_t>(t.values.size()), 0);
    t.missing[5] = 1;
    t.values[5] = 0.0;

    write_flow_file(kFlowPath, t);
    TrafficTensor back = read_flow_file(kFlowPath, 30, 3, 5);
    CHECK(back.values.shape() == t.values.shape());
    CHECK(back.values.values() == t.values.values());
    CHECK(back.missing == t.missing);
  }
  SUBCASE("nan marks missing exactly there") {
    write_file(kFlowPath, "2,2,1\n1,nan\n3,4\n");
    TrafficTensor t = read_flow_file(kFlowPath, 5, 1, 0);
    CHECK(t.is_missing(0, 1, 0));
    CHECK_FALSE(t.is_missing(0, 0, 0));
    CHECK_FALSE(t.is_missing(1, 0, 0));
    CHECK(t.values.at(1, 1, 0) == 4.0);
  }
  SUBCASE("empty file is rejected") {
    write_file(kFlowPath, "");
    CHECK_THROWS_AS(read_flow_file(kFlowPath, 5, 1, 0), DataError);
  }
  SUBCASE("ragged row is rejected") {
    write_file(kFlowPath, "2,2,1\n1,2\n3\n");
    CHECK_THROWS_AS(read_flow_file(kFlowPath, 5, 1, 0), DataError);
  }
  SUBCASE("row count short of header is rejected") {
    write_file(kFlowPath, "3,1,1\n1\n2\n");
    CHECK_THROWS_AS(read_flow_file(kFlowPath, 5, 1, 0), DataError);
  }
  SUBCASE("bad interval is rejected") {
    write_file(kFlowPath, "1,1,1\n1\n");
    CHECK_THROWS_AS(read_flow_file(kFlowPath, 7, 1, 0), ConfigError);
  }
}

TEST_CASE("large graph-shaped file loads with the stated dimensions") {
  // A large (timesteps x nodes) highway-sensor-sized file.
  const long steps = 16992, nodes = 307;
  {
    std::ofstream out(kFlowPath);
    out << steps << "," << nodes << ",1\n";
    std::string row;
    row.reserve(static_cast<size_t>(nodes * 2));
    for (long n = 0; n < nodes; ++n) {
      if (n) row.push_back(',');
      row.push_back('7');
    }
    row.push_back('\n');
    for (long t = 0; t < steps; ++t) out << row;
  }
  TrafficTensor t = read_flow_file(kFlowPath, 5, 1, 0);
  CHECK(t.steps() == steps);
  CHECK(t.nodes() == nodes);
  CHECK(t.channels() == 1);
  CHECK(t.interval_minutes == 5);
  CHECK(t.slots_per_day() == 288);
  std::remove(kFlowPath);
}

TEST_CASE("graph and grid dataset loaders") {
  write_file(kFlowPath, "2,4,1\n1,2,3,4\n5,6,7,8\n");
  write_file(kEdgePath, "0,1\n1,2\n2,3\n");
  SUBCASE("graph loader wires the edge file") {
    auto [tensor, net] = load_graph_dataset(kFlowPath, kEdgePath, 5, 1, 0);
    CHECK(tensor.nodes() == 4);
    CHECK(net.node_count == 4);
    CHECK(net.adj(0, 1) == 1);
  }
  SUBCASE("edge index beyond the flow node count is rejected") {
    write_file(kEdgePath, "0,9\n");
    CHECK_THROWS_AS(load_graph_dataset(kFlowPath, kEdgePath, 5, 1, 0), DataError);
  }
  SUBCASE("grid loader builds the eight-neighbour graph") {
    write_file(kFlowPath, "2,4,2\n1,1,2,2,3,3,4,4\n5,5,6,6,7,7,8,8\n");
    auto [tensor, net] = load_grid_dataset(kFlowPath, 2, 2, 30, 1, 0);
    CHECK(tensor.channels() == 2);
    CHECK(tensor.slots_per_day() == 48);
    CHECK(net.node_count == 4);
    CHECK(net.edges.size() == 12);  // 2x2 grid, all pairs adjacent
  }
  SUBCASE("grid shape mismatch is rejected") {
    CHECK_THROWS_AS(load_grid_dataset(kFlowPath, 3, 3, 30, 1, 0), DataError);
  }
}

TEST_CASE("make_samples") {
  TrafficTensor t;
  t.interval_minutes = 5;
  t.start_week_index = 7;    // crosses into week index 1
  t.start_day_slot = 287;    // last slot of the day
  t.values = Tensor({100, 2, 1});
  for (long i = 0; i < t.values.size(); ++i) t.values[i] = static_cast<double>(i);
  t.missing.assign(static_cast<size_t>(t.values.size()), 0);

  auto samples = make_samples(t, 12, 12);
  CHECK(samples.size() == 77);
  CHECK(samples[0].start_step == 0);
  CHECK(samples[0].input_raw.at(0, 0, 0) == 0.0);
  for (long i = 0; i < 12; ++i) {
    CHECK(samples[5].input_raw.at(i, 0, 0) == t.values.at(5 + i, 0, 0));
    CHECK(samples[5].meta.abs_step[static_cast<size_t>(i)] == 5 + i);
  }
  for (long i = 0; i < 12; ++i) {
    CHECK(samples[5].target_raw.at(i, 0, 0) == t.values.at(5 + 12 + i, 0, 0));
  }
  // Week/day indices roll over correctly at the day boundary.
  CHECK(samples[0].meta.slot[0] == 287);
  CHECK(samples[0].meta.week[0] == 7);
  CHECK(samples[0].meta.slot[1] == 0);
  CHECK(samples[0].meta.week[1] == 1);

  CHECK_THROWS_AS(make_samples(t, 60, 60), DataError);
}

TEST_CASE("split_samples") {
  auto make_n = [](long n) {
    std::vector<Sample> samples(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) samples[static_cast<size_t>(i)].start_step = i;
    return samples;
  };
  SUBCASE("60/20/20") {
    auto s = split_samples(make_n(100), {0.6, 0.2, 0.2});
    CHECK(s.train.size() == 60);
    CHECK(s.val.size() == 20);
    CHECK(s.test.size() == 20);
    CHECK(s.train.front().start_step == 0);
    CHECK(s.val.front().start_step == 60);
    CHECK(s.test.back().start_step == 99);
  }
  SUBCASE("7/1/2 on ten samples") {
    auto s = split_samples(make_n(10), {0.7, 0.1, 0.2});
    CHECK(s.train.size() == 7);
    CHECK(s.val.size() == 1);
    CHECK(s.test.size() == 2);
  }
  SUBCASE("empty split is rejected") {
    CHECK_THROWS_AS(split_samples(make_n(10), {1.0, 0.0, 0.0}), DataError);
  }
  SUBCASE("ratios must sum to one") {
    CHECK_THROWS_AS(split_samples(make_n(10), {0.5, 0.2, 0.2}), ConfigError);
  }
}

TEST_CASE("scaler") {
  TrafficTensor t;
  t.interval_minutes = 5;
  t.values = Tensor({10, 1, 1});
  for (long i = 0; i < 10; ++i) t.values[i] = static_cast<double>(i);
  t.missing.assign(10, 0);

  SUBCASE("statistics come only from the training range") {
    Scaler a = fit_scaler(t, 6);
    t.values[8] = 1e9;  // poisoning a later step must not matter
    Scaler b = fit_scaler(t, 6);
    CHECK(a.mean == b.mean);
    CHECK(a.stddev == b.stddev);
    CHECK(a.mean[0] == doctest::Approx(2.5));
  }
  SUBCASE("missing values are excluded") {
    t.missing[0] = 1;
    Scaler s = fit_scaler(t, 6);
    CHECK(s.mean[0] == doctest::Approx(3.0));
  }
  SUBCASE("zero spread flags the channel and keeps std 1") {
    TrafficTensor flat;
    flat.interval_minutes = 5;
    flat.values = Tensor::full({5, 1, 1}, 7.0);
    flat.missing.assign(5, 0);
    Scaler s = fit_scaler(flat, 5);
    CHECK(s.degenerate[0] == 1);
    CHECK(s.stddev[0] == 1.0);
  }
  SUBCASE("normalize/denormalize round trip") {
    Scaler s = fit_scaler(t, 10);
    for (double v : {0.0, 3.3, 9.9}) {
      CHECK(s.denormalize(s.normalize(v, 0), 0) == doctest::Approx(v).epsilon(1e-12));
    }
  }
}

TEST_CASE("generate_synthetic") {
  SUBCASE("zero delay copies node zero everywhere") {
    auto [t, net] = generate_synthetic(4, 1, 60, 0, 0.3, 5);
    for (long step = 0; step < t.steps(); ++step) {
      for (long i = 1; i < 4; ++i) CHECK(t.values.at(step, i, 0) == t.values.at(step, 0, 0));
    }
  }
  SUBCASE("noiseless delay is an exact shift") {
    auto [t, net] = generate_synthetic(5, 1, 30, 2, 0.0, 6);
    for (long step = 2; step < t.steps(); ++step) {
      for (long i = 1; i < 5; ++i) {
        CHECK(t.values.at(step, i, 0) == t.values.at(step - 2, i - 1, 0));
      }
    }
  }
  SUBCASE("cross-correlation lag scan finds the delay") {
    const long delay = 3;
    auto [t, net] = generate_synthetic(4, 2, 30, delay, 0.2, 7);
    const long steps = t.steps();
    double best = -1e18;
    long best_lag = -1;
    for (long lag = 0; lag <= 8; ++lag) {
      double corr = 0.0;
      for (long s = lag; s < steps; ++s) corr += t.values.at(s, 1, 0) * t.values.at(s - lag, 0, 0);
      corr /= static_cast<double>(steps - lag);
      if (corr > best) {
        best = corr;
        best_lag = lag;
      }
    }
    CHECK(best_lag == delay);
  }
  SUBCASE("deterministic in the seed and ring-shaped") {
    auto [t1, n1] = generate_synthetic(6, 1, 60, 2, 0.5, 42);
    auto [t2, n2] = generate_synthetic(6, 1, 60, 2, 0.5, 42);
    CHECK(t1.values.values() == t2.values.values());
    CHECK(n1.edges.size() == 12);
    CHECK(n1.adj(0, 5) == 1);  // the ring wraps around
    CHECK(n1.adj(5, 0) == 1);
  }
  SUBCASE("flows are non-negative") {
    auto [t, net] = generate_synthetic(3, 1, 60, 1, 50.0, 11);
    for (long i = 0; i < t.values.size(); ++i) CHECK(t.values[i] >= 0.0);
  }
}
