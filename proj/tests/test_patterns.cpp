#include <doctest.h>

#include <cmath>
#include <random>

#include "flowcast/data.hpp"
#include "flowcast/dtw.hpp"
#include "flowcast/errors.hpp"
#include "flowcast/kshape.hpp"
#include "flowcast/patterns.hpp"

using namespace flowcast;

namespace {

// Exponential-time recursive DTW, the independent oracle for the DP table.
double dtw_brute(std::span<const double> a, std::span<const double> b, size_t i, size_t j) {
  const double cost = std::fabs(a[i] - b[j]);
  if (i == 0 && j == 0) return cost;
  double best = std::numeric_limits<double>::infinity();
  if (i > 0) best = std::min(best, dtw_brute(a, b, i - 1, j));
  if (j > 0) best = std::min(best, dtw_brute(a, b, i, j - 1));
  if (i > 0 && j > 0) best = std::min(best, dtw_brute(a, b, i - 1, j - 1));
  return cost + best;
}

std::vector<double> random_series(std::mt19937_64& rng, long len) {
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  std::vector<double> s(static_cast<size_t>(len));
  for (auto& v : s) v = dist(rng);
  return s;
}

TrafficTensor series_tensor(const std::vector<double>& values, long interval = 240) {
  TrafficTensor t;
  t.interval_minutes = interval;
  t.values = Tensor::from_data({static_cast<long>(values.size()), 1, 1}, values);
  t.missing.assign(values.size(), 0);
  return t;
}

}  // namespace

TEST_CASE("dtw_distance examples and oracle") {
  const std::vector<double> abc = {1, 2, 3};
  CHECK(dtw_distance(abc, abc) == 0.0);
  CHECK(dtw_distance(std::vector<double>{0, 0, 1}, std::vector<double>{0, 1}) == 0.0);
  CHECK(dtw_distance(std::vector<double>{1, 3}, std::vector<double>{2}) == 2.0);
  CHECK_THROWS_AS(dtw_distance(std::vector<double>{}, abc), DataError);

  SUBCASE("matches the recursive oracle on short random series") {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<long> len(1, 6);
    for (int trial = 0; trial < 30; ++trial) {
      auto a = random_series(rng, len(rng));
      auto b = random_series(rng, len(rng));
      const double dp = dtw_distance(a, b);
      const double brute = dtw_brute(a, b, a.size() - 1, b.size() - 1);
      CHECK(dp == doctest::Approx(brute).epsilon(1e-12));
    }
  }
  SUBCASE("symmetry, identity, non-negativity, Manhattan bound") {
    std::mt19937_64 rng(78);
    for (int trial = 0; trial < 20; ++trial) {
      auto a = random_series(rng, 5);
      auto b = random_series(rng, 5);
      const double ab = dtw_distance(a, b);
      CHECK(ab >= 0.0);
      CHECK(ab == dtw_distance(b, a));
      CHECK(dtw_distance(a, a) == 0.0);
      double manhattan = 0.0;
      for (size_t i = 0; i < a.size(); ++i) manhattan += std::fabs(a[i] - b[i]);
      CHECK(ab <= manhattan + 1e-12);
    }
  }
}

TEST_CASE("semantic_mask") {
  SUBCASE("pairwise oracle: closest series wins") {
    std::vector<std::vector<double>> series = {{1, 2, 3}, {1, 2, 3}, {50, 60, 70}};
    auto mask = semantic_mask(series, 1);
    CHECK(mask.mask.at(0, 1) == 1.0);
    CHECK(mask.mask.at(0, 2) == 0.0);
    CHECK(mask.mask.at(1, 0) == 1.0);
    CHECK(mask.mask.at(0, 0) == 1.0);
  }
  SUBCASE("K=0 gives the identity") {
    std::vector<std::vector<double>> series = {{1}, {2}, {3}};
    auto mask = semantic_mask(series, 0);
    for (long i = 0; i < 3; ++i)
      for (long j = 0; j < 3; ++j) CHECK(mask.mask.at(i, j) == (i == j ? 1.0 : 0.0));
  }
  SUBCASE("ties break to the lowest other index") {
    std::vector<std::vector<double>> series = {{5, 5}, {5, 5}, {5, 5}};
    auto mask = semantic_mask(series, 1);
    CHECK(mask.mask.at(0, 1) == 1.0);
    CHECK(mask.mask.at(1, 0) == 1.0);
    CHECK(mask.mask.at(2, 0) == 1.0);
  }
  SUBCASE("row sums are K+1") {
    std::mt19937_64 rng(5);
    std::vector<std::vector<double>> series;
    for (int i = 0; i < 7; ++i) series.push_back(random_series(rng, 6));
    auto mask = semantic_mask(series, 3);
    for (long i = 0; i < 7; ++i) {
      double sum = 0.0;
      for (long j = 0; j < 7; ++j) sum += mask.mask.at(i, j);
      CHECK(sum == 4.0);
    }
  }
  SUBCASE("K >= N is rejected") {
    std::vector<std::vector<double>> series = {{1}, {2}};
    CHECK_THROWS_AS(semantic_mask(series, 2), ConfigError);
  }
}

TEST_CASE("extract_windows") {
  SUBCASE("count is L - S + 1 per node") {
    auto t = series_tensor({1, 2, 3, 4, 5});
    auto windows = extract_windows(t, 3, 0, 5);
    CHECK(windows.size() == 3);
  }
  SUBCASE("constant window maps to zeros") {
    auto t = series_tensor({2, 2, 2});
    auto windows = extract_windows(t, 3, 0, 3);
    REQUIRE(windows.size() == 1);
    for (double v : windows[0]) CHECK(v == 0.0);
  }
  SUBCASE("z-normalization arithmetic") {
    auto t = series_tensor({0, 1, 2});
    auto windows = extract_windows(t, 3, 0, 3);
    REQUIRE(windows.size() == 1);
    CHECK(std::fabs(windows[0][0] + 1.2247) < 1e-4);
    CHECK(std::fabs(windows[0][1]) < 1e-12);
    CHECK(std::fabs(windows[0][2] - 1.2247) < 1e-4);
  }
  SUBCASE("windows touching missing values are dropped") {
    auto t = series_tensor({1, 2, 3, 4, 5, 6});
    t.missing[2] = 1;
    auto windows = extract_windows(t, 3, 0, 6);
    REQUIRE(windows.size() == 1);  // only [3,4,5] avoids the missing step
    CHECK(windows[0][0] == doctest::Approx(-1.2247).epsilon(1e-3));
  }
  SUBCASE("no valid window is a rejection") {
    auto t = series_tensor({1, 2});
    CHECK_THROWS_AS(extract_windows(t, 3, 0, 2), DataError);
  }
}

TEST_CASE("shape based distance") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    auto a = random_series(rng, 6);
    auto b = random_series(rng, 6);
    const double d = shape_based_distance(a, b);
    CHECK(d >= 0.0);
    CHECK(d <= 2.0);
    CHECK(shape_based_distance(a, a) <= 1e-12);
  }
}

TEST_CASE("kshape_cluster") {
  SUBCASE("single cluster yields one z-normalized centroid") {
    std::mt19937_64 rng(6);
    std::vector<std::vector<double>> windows;
    for (int i = 0; i < 12; ++i) {
      auto w = random_series(rng, 5);
      znormalize(w);
      windows.push_back(w);
    }
    auto res = kshape_cluster(windows, 1, 3);
    REQUIRE(res.patterns.count() == 1);
    double mean = 0.0, var = 0.0;
    for (long j = 0; j < 5; ++j) mean += res.patterns.centroids.at(0, j);
    mean /= 5.0;
    for (long j = 0; j < 5; ++j) {
      var += std::pow(res.patterns.centroids.at(0, j) - mean, 2.0);
    }
    var /= 5.0;
    CHECK(std::fabs(mean) < 1e-6);
    CHECK(std::fabs(var - 1.0) < 1e-6);
    for (long a : res.assignment) CHECK(a == 0);
  }

  SUBCASE("two shape families are separated and match the brute-force check") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    std::vector<std::vector<double>> windows;
    const long S = 8;
    for (int i = 0; i < 10; ++i) {  // rising ramps
      std::vector<double> w(S);
      for (long j = 0; j < S; ++j) w[static_cast<size_t>(j)] = static_cast<double>(j) + jitter(rng);
      znormalize(w);
      windows.push_back(w);
    }
    for (int i = 0; i < 10; ++i) {  // single spikes
      std::vector<double> w(S, 0.0);
      w[static_cast<size_t>(3 + (i % 2))] = 5.0;
      for (auto& v : w) v += jitter(rng);
      znormalize(w);
      windows.push_back(w);
    }
    auto res = kshape_cluster(windows, 2, 11);
    for (int i = 1; i < 10; ++i) CHECK(res.assignment[static_cast<size_t>(i)] == res.assignment[0]);
    for (int i = 11; i < 20; ++i) CHECK(res.assignment[static_cast<size_t>(i)] == res.assignment[10]);
    CHECK(res.assignment[0] != res.assignment[10]);

    // Brute-force nearest-centroid check after convergence.
    for (size_t i = 0; i < windows.size(); ++i) {
      std::vector<double> c0(static_cast<size_t>(S)), c1(static_cast<size_t>(S));
      for (long j = 0; j < S; ++j) {
        c0[static_cast<size_t>(j)] = res.patterns.centroids.at(0, j);
        c1[static_cast<size_t>(j)] = res.patterns.centroids.at(1, j);
      }
      const double d0 = shape_based_distance(c0, windows[i]);
      const double d1 = shape_based_distance(c1, windows[i]);
      CHECK(res.assignment[i] == (d1 < d0 ? 1 : 0));
    }
  }

  SUBCASE("scaling and shifting the raw flow leaves assignments unchanged") {
    std::vector<double> raw;
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> dist(0.0, 10.0);
    for (int i = 0; i < 40; ++i) raw.push_back(dist(rng));
    auto base = series_tensor(raw);
    std::vector<double> scaled_values = raw;
    for (auto& v : scaled_values) v = v * 2.0 + 5.0;
    auto scaled = series_tensor(scaled_values);

    auto w1 = extract_windows(base, 4, 0, 40);
    auto w2 = extract_windows(scaled, 4, 0, 40);
    REQUIRE(w1.size() == w2.size());
    for (size_t i = 0; i < w1.size(); ++i) {
      for (size_t j = 0; j < w1[i].size(); ++j) CHECK(w1[i][j] == doctest::Approx(w2[i][j]).epsilon(1e-12));
    }
    auto r1 = kshape_cluster(w1, 3, 99);
    auto r2 = kshape_cluster(w2, 3, 99);
    CHECK(r1.assignment == r2.assignment);
  }

  SUBCASE("objective history is non-increasing") {
    std::mt19937_64 rng(17);
    for (unsigned long seed = 0; seed < 6; ++seed) {
      std::vector<std::vector<double>> windows;
      for (int i = 0; i < 25; ++i) {
        auto w = random_series(rng, 6);
        znormalize(w);
        windows.push_back(w);
      }
      auto res = kshape_cluster(windows, 4, seed);
      for (size_t i = 1; i < res.objective_history.size(); ++i) {
        CHECK(res.objective_history[i] <= res.objective_history[i - 1] + 1e-9);
      }
    }
  }

  SUBCASE("deterministic given windows order and seed") {
    std::mt19937_64 rng(19);
    std::vector<std::vector<double>> windows;
    for (int i = 0; i < 15; ++i) {
      auto w = random_series(rng, 5);
      znormalize(w);
      windows.push_back(w);
    }
    auto a = kshape_cluster(windows, 3, 42);
    auto b = kshape_cluster(windows, 3, 42);
    CHECK(a.assignment == b.assignment);
    CHECK(a.patterns.centroids.values() == b.patterns.centroids.values());
  }

  SUBCASE("fewer windows than clusters is rejected") {
    std::vector<std::vector<double>> windows = {{1, 2, 3}};
    CHECK_THROWS_AS(kshape_cluster(windows, 2, 0), DataError);
  }
}

TEST_CASE("mean_daily_profiles") {
  TrafficTensor t;
  t.interval_minutes = 720;  // two slots per day
  t.values = Tensor::from_data({4, 1, 1}, {10, 20, 30, 40});
  t.missing.assign(4, 0);
  auto profiles = mean_daily_profiles(t, 4);
  REQUIRE(profiles.size() == 1);
  REQUIRE(profiles[0].size() == 2);
  CHECK(profiles[0][0] == doctest::Approx(20.0));  // slots 0: steps 0,2
  CHECK(profiles[0][1] == doctest::Approx(30.0));  // slots 1: steps 1,3

  SUBCASE("missing values are excluded from the mean") {
    t.missing[0] = 1;
    auto p = mean_daily_profiles(t, 4);
    CHECK(p[0][0] == doctest::Approx(30.0));
  }
}
