#include "flowcast/kshape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "flowcast/eigen_sym.hpp"
#include "flowcast/errors.hpp"

namespace flowcast {

void znormalize(std::span<double> series) {
  const size_t n = series.size();
  if (n == 0) return;
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : series) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  if (var < 1e-24) {
    for (double& v : series) v = 0.0;
    return;
  }
  const double inv = 1.0 / std::sqrt(var);
  for (double& v : series) v = (v - mean) * inv;
}

namespace {

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

// Cross-correlation at shift s: sum_t a[t] * b[t-s].
double cross_corr_at(std::span<const double> a, std::span<const double> b, long s) {
  const long m = static_cast<long>(a.size());
  double acc = 0.0;
  const long lo = std::max(0L, s);
  const long hi = std::min(m - 1, m - 1 + s);
  for (long t = lo; t <= hi; ++t) acc += a[static_cast<size_t>(t)] * b[static_cast<size_t>(t - s)];
  return acc;
}

struct BestShift {
  double ncc = -2.0;
  long shift = 0;
};

BestShift max_ncc(std::span<const double> ref, std::span<const double> series) {
  const long m = static_cast<long>(ref.size());
  const double denom = std::sqrt(norm2(ref) * norm2(series));
  BestShift best;
  if (denom == 0.0) return best;  // degenerate, caller decides
  for (long s = -(m - 1); s <= m - 1; ++s) {
    const double ncc = cross_corr_at(ref, series, s) / denom;
    if (ncc > best.ncc) {
      best.ncc = ncc;
      best.shift = s;
    }
  }
  return best;
}

bool all_zero(std::span<const double> x) {
  for (double v : x) {
    if (v != 0.0) return false;
  }
  return true;
}

void fix_sign_largest(std::vector<double>& v) {
  size_t arg = 0;
  double best = -1.0;
  for (size_t i = 0; i < v.size(); ++i) {
    if (std::fabs(v[i]) > best) {
      best = std::fabs(v[i]);
      arg = i;
    }
  }
  if (v[arg] < 0.0) {
    for (double& x : v) x = -x;
  }
}

}  // namespace

double shape_based_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw DataError("shape_based_distance: series must be non-empty and equal length");
  }
  const bool za = all_zero(a), zb = all_zero(b);
  if (za && zb) return 0.0;
  if (za || zb) return 2.0;
  return 1.0 - max_ncc(a, b).ncc;
}

long sbd_best_shift(std::span<const double> ref, std::span<const double> series) {
  return max_ncc(ref, series).shift;
}

namespace {

// Shape extraction: maximal eigenvector of the centered scatter matrix of
// the members aligned toward the previous centroid.
std::vector<double> extract_shape(const std::vector<const std::vector<double>*>& members,
                                  const std::vector<double>& prev_centroid) {
  const long m = static_cast<long>(prev_centroid.size());
  const bool prev_zero = all_zero(prev_centroid);

  // Aligned member matrix (zero-padded shifts).
  std::vector<std::vector<double>> aligned;
  aligned.reserve(members.size());
  for (const auto* w : members) {
    long shift = 0;
    if (!prev_zero && !all_zero(*w)) shift = max_ncc(prev_centroid, *w).shift;
    std::vector<double> row(static_cast<size_t>(m), 0.0);
    for (long t = 0; t < m; ++t) {
      const long src = t - shift;
      if (src >= 0 && src < m) row[static_cast<size_t>(t)] = (*w)[static_cast<size_t>(src)];
    }
    aligned.push_back(std::move(row));
  }

  // M = Q S Q with S = A^T A and Q the centering projector.
  Tensor scatter({m, m});
  for (const auto& row : aligned) {
    for (long i = 0; i < m; ++i) {
      if (row[static_cast<size_t>(i)] == 0.0) continue;
      for (long j = 0; j < m; ++j) {
        scatter.at(i, j) += row[static_cast<size_t>(i)] * row[static_cast<size_t>(j)];
      }
    }
  }
  // Q S Q expands to S - rowmean - colmean + grandmean for symmetric S.
  const double inv_m = 1.0 / static_cast<double>(m);
  std::vector<double> rowsum(static_cast<size_t>(m), 0.0);
  double total = 0.0;
  for (long i = 0; i < m; ++i) {
    for (long j = 0; j < m; ++j) rowsum[static_cast<size_t>(i)] += scatter.at(i, j);
    total += rowsum[static_cast<size_t>(i)];
  }
  Tensor centered({m, m});
  for (long i = 0; i < m; ++i) {
    for (long j = 0; j < m; ++j) {
      centered.at(i, j) = scatter.at(i, j) - rowsum[static_cast<size_t>(i)] * inv_m -
                          rowsum[static_cast<size_t>(j)] * inv_m + total * inv_m * inv_m;
    }
  }

  EigenSym eig = eigh(centered);
  const double top = eig.eigenvalues.back();
  if (!(top > 1e-12)) return std::vector<double>(static_cast<size_t>(m), 0.0);

  std::vector<double> centroid(static_cast<size_t>(m));
  for (long i = 0; i < m; ++i) centroid[static_cast<size_t>(i)] = eig.vectors.at(i, m - 1);

  if (!prev_zero) {
    double dot = 0.0;
    for (long i = 0; i < m; ++i) dot += centroid[static_cast<size_t>(i)] * prev_centroid[static_cast<size_t>(i)];
    if (dot < 0.0) {
      for (double& v : centroid) v = -v;
    }
  } else {
    fix_sign_largest(centroid);
  }
  znormalize(centroid);
  return centroid;
}

}  // namespace

KShapeResult kshape_cluster(const std::vector<std::vector<double>>& windows, long n_clusters,
                            unsigned long seed, long max_iterations) {
  const long nw = static_cast<long>(windows.size());
  if (n_clusters < 1) throw ConfigError("kshape_cluster: cluster count must be >= 1");
  if (nw < n_clusters) {
    throw DataError("kshape_cluster: " + std::to_string(nw) + " windows cannot fill " +
                    std::to_string(n_clusters) + " clusters");
  }
  const long m = static_cast<long>(windows[0].size());
  if (m < 2) throw DataError("kshape_cluster: window length must be >= 2");
  for (const auto& w : windows) {
    if (static_cast<long>(w.size()) != m) {
      throw DataError("kshape_cluster: windows must share one length");
    }
  }

  KShapeResult res;
  res.assignment.resize(static_cast<size_t>(nw));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<long> pick(0, n_clusters - 1);
  for (auto& a : res.assignment) a = pick(rng);

  std::vector<std::vector<double>> centroids(
      static_cast<size_t>(n_clusters), std::vector<double>(static_cast<size_t>(m), 0.0));
  std::vector<double> dist_to_centroid(static_cast<size_t>(nw), 0.0);

  auto cluster_cost = [&](const std::vector<const std::vector<double>*>& members,
                          const std::vector<double>& centroid) {
    double s = 0.0;
    for (const auto* w : members) s += shape_based_distance(centroid, *w);
    return s;
  };

  for (long iter = 0; iter < max_iterations; ++iter) {
    // Refinement with a monotonicity guard: keep the previous centroid when
    // the refined one does not improve its cluster's cost.
    for (long k = 0; k < n_clusters; ++k) {
      std::vector<const std::vector<double>*> members;
      for (long i = 0; i < nw; ++i) {
        if (res.assignment[static_cast<size_t>(i)] == k) members.push_back(&windows[static_cast<size_t>(i)]);
      }
      if (members.empty()) continue;  // reseeded below
      auto& centroid = centroids[static_cast<size_t>(k)];
      std::vector<double> refined = extract_shape(members, centroid);
      if (iter == 0 || cluster_cost(members, refined) <= cluster_cost(members, centroid)) {
        centroid = std::move(refined);
      }
    }

    // Reseed empty clusters from the window farthest from its centroid.
    std::vector<bool> taken(static_cast<size_t>(nw), false);
    for (long k = 0; k < n_clusters; ++k) {
      bool empty = true;
      for (long i = 0; i < nw && empty; ++i) {
        if (res.assignment[static_cast<size_t>(i)] == k) empty = false;
      }
      if (!empty) continue;
      long far_idx = -1;
      double far_dist = -1.0;
      for (long i = 0; i < nw; ++i) {
        if (taken[static_cast<size_t>(i)]) continue;
        const double d = shape_based_distance(
            centroids[static_cast<size_t>(res.assignment[static_cast<size_t>(i)])],
            windows[static_cast<size_t>(i)]);
        if (d > far_dist) {
          far_dist = d;
          far_idx = i;
        }
      }
      if (far_idx >= 0) {
        taken[static_cast<size_t>(far_idx)] = true;
        centroids[static_cast<size_t>(k)] = windows[static_cast<size_t>(far_idx)];
        znormalize(centroids[static_cast<size_t>(k)]);
      }
    }

    // Assignment by nearest centroid, ties to the lower cluster id.
    bool changed = false;
    double objective = 0.0;
    for (long i = 0; i < nw; ++i) {
      long best_k = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (long k = 0; k < n_clusters; ++k) {
        const double d = shape_based_distance(centroids[static_cast<size_t>(k)],
                                              windows[static_cast<size_t>(i)]);
        if (d < best_d) {
          best_d = d;
          best_k = k;
        }
      }
      if (res.assignment[static_cast<size_t>(i)] != best_k) {
        res.assignment[static_cast<size_t>(i)] = best_k;
        changed = true;
      }
      dist_to_centroid[static_cast<size_t>(i)] = best_d;
      objective += best_d;
    }
    res.objective_history.push_back(objective);
    res.iterations = iter + 1;
    if (!changed && iter > 0) break;
  }

  res.patterns.window = m;
  res.patterns.centroids = Tensor({n_clusters, m});
  for (long k = 0; k < n_clusters; ++k) {
    for (long j = 0; j < m; ++j) {
      res.patterns.centroids.at(k, j) = centroids[static_cast<size_t>(k)][static_cast<size_t>(j)];
    }
  }
  return res;
}

}  // namespace flowcast
