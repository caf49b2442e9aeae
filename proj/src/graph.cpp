#include "flowcast/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "flowcast/eigen_sym.hpp"
#include "flowcast/errors.hpp"

namespace flowcast {

RoadNetwork build_from_edge_list(long node_count,
                                 const std::vector<std::pair<long, long>>& edges) {
  if (node_count <= 0) throw DataError("build_from_edge_list: node count must be positive");
  RoadNetwork net;
  net.node_count = node_count;
  net.adjacency.assign(static_cast<size_t>(node_count * node_count), 0);
  std::set<std::pair<long, long>> unique;
  for (const auto& [src, dst] : edges) {
    if (src < 0 || src >= node_count || dst < 0 || dst >= node_count) {
      throw DataError("build_from_edge_list: edge (" + std::to_string(src) + "," +
                      std::to_string(dst) + ") out of range for " + std::to_string(node_count) +
                      " nodes");
    }
    if (src == dst) continue;
    unique.emplace(src, dst);
  }
  net.edges.assign(unique.begin(), unique.end());
  for (const auto& [src, dst] : net.edges) {
    net.adjacency[static_cast<size_t>(src * node_count + dst)] = 1;
  }
  return net;
}

RoadNetwork grid_to_graph(long rows, long cols) {
  if (rows < 1 || cols < 1) throw DataError("grid_to_graph: rows and cols must be >= 1");
  std::vector<std::pair<long, long>> edges;
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      const long id = r * cols + c;
      for (long dr = -1; dr <= 1; ++dr) {
        for (long dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const long nr = r + dr, nc = c + dc;
          if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
          edges.emplace_back(id, nr * cols + nc);
        }
      }
    }
  }
  return build_from_edge_list(rows * cols, edges);
}

HopDistanceMatrix hop_distances(const RoadNetwork& net) {
  const long n = net.node_count;
  HopDistanceMatrix out;
  out.node_count = n;
  out.dist.assign(static_cast<size_t>(n * n), kUnreachable);

  std::vector<std::vector<long>> succ(static_cast<size_t>(n));
  for (const auto& [src, dst] : net.edges) succ[static_cast<size_t>(src)].push_back(dst);

  std::deque<long> queue;
  for (long s = 0; s < n; ++s) {
    long* row = out.dist.data() + s * n;
    row[s] = 0;
    queue.clear();
    queue.push_back(s);
    while (!queue.empty()) {
      const long u = queue.front();
      queue.pop_front();
      for (long v : succ[static_cast<size_t>(u)]) {
        if (row[v] == kUnreachable) {
          row[v] = row[u] + 1;
          queue.push_back(v);
        }
      }
    }
  }
  return out;
}

Tensor geographic_mask(const HopDistanceMatrix& dist, long lambda) {
  if (lambda < 0) throw ConfigError("geographic_mask: lambda must be >= 0");
  const long n = dist.node_count;
  Tensor mask({n, n});
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      const long d = dist.at(i, j);
      mask.at(i, j) = (d != kUnreachable && d <= lambda) ? 1.0 : 0.0;
    }
  }
  return mask;
}

namespace {

constexpr double kZeroEigenTolerance = 1e-8;

// Sign convention shared with k-Shape centroids: the component of largest
// magnitude (lowest index on ties) is made positive.
void fix_sign(double* column, long n, long stride) {
  long arg = 0;
  double best = -1.0;
  for (long i = 0; i < n; ++i) {
    const double mag = std::fabs(column[i * stride]);
    if (mag > best) {
      best = mag;
      arg = i;
    }
  }
  if (column[arg * stride] < 0.0) {
    for (long i = 0; i < n; ++i) column[i * stride] = -column[i * stride];
  }
}

}  // namespace

LaplacianEmbeddingBasis laplacian_embedding_basis(const RoadNetwork& net, long k) {
  const long n = net.node_count;
  if (k <= 0) throw ConfigError("laplacian_embedding_basis: k must be positive");

  // Symmetrize, then Delta = I - D^{-1/2} A D^{-1/2}; isolated nodes get 0
  // in place of D^{-1/2}.
  Tensor a({n, n});
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j)
      a.at(i, j) = (net.adj(i, j) || net.adj(j, i)) ? 1.0 : 0.0;

  std::vector<double> inv_sqrt_deg(static_cast<size_t>(n), 0.0);
  for (long i = 0; i < n; ++i) {
    double deg = 0.0;
    for (long j = 0; j < n; ++j) deg += a.at(i, j);
    if (deg > 0.0) inv_sqrt_deg[static_cast<size_t>(i)] = 1.0 / std::sqrt(deg);
  }

  Tensor delta({n, n});
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      const double norm = inv_sqrt_deg[static_cast<size_t>(i)] * a.at(i, j) *
                          inv_sqrt_deg[static_cast<size_t>(j)];
      delta.at(i, j) = (i == j ? 1.0 : 0.0) - norm;
    }
  }

  EigenSym eig = eigh(delta);

  std::vector<long> kept;
  for (long j = 0; j < n; ++j) {
    if (eig.eigenvalues[static_cast<size_t>(j)] > kZeroEigenTolerance) kept.push_back(j);
  }
  if (static_cast<long>(kept.size()) < k) {
    throw ConfigError("laplacian_embedding_basis: requested k=" + std::to_string(k) +
                      " but only " + std::to_string(kept.size()) +
                      " nontrivial eigenvectors are available");
  }

  LaplacianEmbeddingBasis basis;
  basis.vectors = Tensor({n, k});
  basis.eigenvalues.resize(static_cast<size_t>(k));
  for (long c = 0; c < k; ++c) {
    const long src = kept[static_cast<size_t>(c)];
    basis.eigenvalues[static_cast<size_t>(c)] = eig.eigenvalues[static_cast<size_t>(src)];
    for (long i = 0; i < n; ++i) basis.vectors.at(i, c) = eig.vectors.at(i, src);
    fix_sign(basis.vectors.data() + c, n, k);
  }
  return basis;
}

std::vector<std::pair<long, long>> read_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_edge_list: cannot open " + path);
  std::vector<std::pair<long, long>> edges;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string field;
    long vals[2];
    for (int f = 0; f < 2; ++f) {
      if (!std::getline(ls, field, ',')) {
        throw DataError("read_edge_list: " + path + ":" + std::to_string(line_no) +
                        ": expected src,dst");
      }
      try {
        vals[f] = std::stol(field);
      } catch (const std::exception&) {
        throw DataError("read_edge_list: " + path + ":" + std::to_string(line_no) +
                        ": bad integer '" + field + "'");
      }
    }
    // Optional third field is a weight; binary adjacency discards it.
    edges.emplace_back(vals[0], vals[1]);
  }
  return edges;
}

void write_edge_list(const std::string& path, const RoadNetwork& net) {
  std::ofstream out(path);
  if (!out) throw DataError("write_edge_list: cannot open " + path);
  for (const auto& [src, dst] : net.edges) out << src << "," << dst << "\n";
}

}  // namespace flowcast
