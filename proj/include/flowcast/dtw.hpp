#pragma once

#include <span>
#include <vector>

#include "flowcast/tensor.hpp"

namespace flowcast {

/// Classic unconstrained DTW with absolute-difference local cost and steps
/// {(-1,0),(0,-1),(-1,-1)}. Symmetric, zero for identical series.
double dtw_distance(std::span<const double> a, std::span<const double> b);

struct SemanticMask {
  Tensor mask;  // N x N binary
  long neighbors_per_node = 0;
};

/// Marks, for each node, its K most DTW-similar peers (smallest distance,
/// ties to the lower node index) plus itself.
SemanticMask semantic_mask(const std::vector<std::vector<double>>& node_series, long K);

}  // namespace flowcast
