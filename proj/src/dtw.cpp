#include "flowcast/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "flowcast/errors.hpp"

namespace flowcast {

double dtw_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DataError("dtw_distance: empty series");
  const size_t n = a.size(), m = b.size();
  constexpr double inf = std::numeric_limits<double>::infinity();

  // Rolling rows of the DP table, one extra leading cell for the boundary.
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (size_t j = 1; j <= m; ++j) {
      const double cost = std::fabs(a[i - 1] - b[j - 1]);
      cur[j] = cost + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

SemanticMask semantic_mask(const std::vector<std::vector<double>>& node_series, long K) {
  const long n = static_cast<long>(node_series.size());
  if (K < 0 || K >= n) {
    throw ConfigError("semantic_mask: K=" + std::to_string(K) + " must satisfy 0 <= K < N=" +
                      std::to_string(n));
  }
  for (const auto& s : node_series) {
    if (s.empty()) throw DataError("semantic_mask: node has an empty representative series");
  }

  Tensor dist({n, n});
  for (long i = 0; i < n; ++i) {
    for (long j = i + 1; j < n; ++j) {
      const double d = dtw_distance(node_series[static_cast<size_t>(i)],
                                    node_series[static_cast<size_t>(j)]);
      dist.at(i, j) = d;
      dist.at(j, i) = d;
    }
  }

  SemanticMask out;
  out.neighbors_per_node = K;
  out.mask = Tensor({n, n});
  std::vector<long> order(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](long x, long y) {
      if (x == i) return false;  // self never competes for a neighbour slot
      if (y == i) return true;
      return dist.at(i, x) < dist.at(i, y);
    });
    out.mask.at(i, i) = 1.0;
    for (long r = 0; r < K; ++r) out.mask.at(i, order[static_cast<size_t>(r)]) = 1.0;
  }
  return out;
}

}  // namespace flowcast
