#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "flowcast/tensor.hpp"

namespace flowcast {

/// Directed road-network graph over N nodes with a dense binary adjacency.
/// Edges are normalized on construction: duplicates collapsed, self-loops
/// dropped, list sorted. The diagonal of the adjacency is always zero.
struct RoadNetwork {
  long node_count = 0;
  std::vector<std::pair<long, long>> edges;
  std::vector<std::uint8_t> adjacency;  // node_count * node_count, row-major

  std::uint8_t adj(long i, long j) const {
    return adjacency[static_cast<size_t>(i * node_count + j)];
  }
};

inline constexpr long kUnreachable = -1;

/// All-pairs directed hop distances; kUnreachable marks missing paths.
struct HopDistanceMatrix {
  long node_count = 0;
  std::vector<long> dist;  // node_count * node_count, row-major

  long at(long i, long j) const { return dist[static_cast<size_t>(i * node_count + j)]; }
};

struct LaplacianEmbeddingBasis {
  Tensor vectors;                   // N x k, unit-norm columns
  std::vector<double> eigenvalues;  // k, ascending, all above the zero tolerance
};

RoadNetwork build_from_edge_list(long node_count, const std::vector<std::pair<long, long>>& edges);

/// Grid cells in row-major order, directed edges between all 8-neighbour
/// pairs (both orientations).
RoadNetwork grid_to_graph(long rows, long cols);

HopDistanceMatrix hop_distances(const RoadNetwork& net);

/// Binary mask: 1 iff hops(i,j) <= lambda (self always included,
/// unreachable pairs always 0).
Tensor geographic_mask(const HopDistanceMatrix& dist, long lambda);

/// Eigenvectors of the normalized Laplacian of max(A, A^T) paired with the
/// k smallest eigenvalues above the zero tolerance 1e-8. Column signs are
/// fixed so the entry of largest magnitude (lowest index on ties) is
/// positive.
LaplacianEmbeddingBasis laplacian_embedding_basis(const RoadNetwork& net, long k);

/// Edge-list text format: one "src,dst[,weight]" per line, 0-based,
/// '#' starts a comment. Weights are parsed and discarded.
std::vector<std::pair<long, long>> read_edge_list(const std::string& path);
void write_edge_list(const std::string& path, const RoadNetwork& net);

}  // namespace flowcast
