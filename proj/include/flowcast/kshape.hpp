#pragma once

#include <span>
#include <vector>

#include "flowcast/tensor.hpp"

namespace flowcast {

/// Centroid series from k-Shape clustering; each centroid is z-normalized
/// (or all-zero for a degenerate cluster).
struct PatternSet {
  Tensor centroids;  // N_p x S
  long window = 0;   // S

  long count() const { return centroids.rank() == 2 ? centroids.dim(0) : 0; }
};

struct KShapeResult {
  PatternSet patterns;
  std::vector<long> assignment;           // one cluster id per input window
  std::vector<double> objective_history;  // sum of SBD to assigned centroid per iteration
  long iterations = 0;
};

/// Z-normalize in place with the population standard deviation; an
/// all-constant series maps to all zeros.
void znormalize(std::span<double> series);

/// Shape-based distance 1 - max_w NCC_c over all shifts; range [0,2].
double shape_based_distance(std::span<const double> a, std::span<const double> b);

/// Best alignment shift of `series` toward `ref` (the shift achieving the
/// maximal coefficient-normalized cross-correlation).
long sbd_best_shift(std::span<const double> ref, std::span<const double> series);

/// k-Shape clustering: assignment by SBD, centroid refinement by the
/// maximal eigenvector of the shift-aligned scatter matrix. A refined
/// centroid that would worsen its cluster's objective is discarded, which
/// keeps the objective non-increasing; empty clusters are reseeded from
/// the window farthest from its centroid.
KShapeResult kshape_cluster(const std::vector<std::vector<double>>& windows, long n_clusters,
                            unsigned long seed, long max_iterations = 100);

}  // namespace flowcast
