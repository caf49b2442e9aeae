#include "flowcast/embedding.hpp"

#include <cmath>
#include <stdexcept>

namespace flowcast {

Tensor temporal_position_encoding(long steps, long dim) {
  if (dim % 2 != 0) {
    throw std::invalid_argument("temporal_position_encoding: dim must be even, got " +
                                std::to_string(dim));
  }
  Tensor pe({steps, dim});
  for (long t = 0; t < steps; ++t) {
    for (long i = 0; i < dim / 2; ++i) {
      const double rate = std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(dim));
      const double arg = static_cast<double>(t) / rate;
      pe.at(t, 2 * i) = std::sin(arg);
      pe.at(t, 2 * i + 1) = std::cos(arg);
    }
  }
  return pe;
}

ad::Value embed(const Tensor& window_norm, const TimeMeta& meta, const Tensor& basis,
                const EmbeddingTables& tables, const Tensor& position_encoding) {
  if (window_norm.rank() != 3) {
    throw std::invalid_argument("embed: window must be (T,N,C), got " + window_norm.shape_str());
  }
  const long t_steps = window_norm.dim(0);
  const long n_nodes = window_norm.dim(1);
  if (static_cast<long>(meta.week.size()) != t_steps) {
    throw std::invalid_argument("embed: meta covers " + std::to_string(meta.week.size()) +
                                " steps, window has " + std::to_string(t_steps));
  }
  if (basis.rank() != 2 || basis.dim(0) != n_nodes) {
    throw std::invalid_argument("embed: basis " + basis.shape_str() + " does not cover " +
                                std::to_string(n_nodes) + " nodes");
  }

  using namespace ad;
  Value data = add_bias(matmul(constant(window_norm), leaf(*tables.data_w)),
                        leaf(*tables.data_b));
  Value spatial = expand_axis0(
      add_bias(matmul(constant(basis), leaf(*tables.lap_w)), leaf(*tables.lap_b)), t_steps);

  std::vector<long> week_rows, day_rows;
  week_rows.reserve(static_cast<size_t>(t_steps));
  day_rows.reserve(static_cast<size_t>(t_steps));
  for (long t = 0; t < t_steps; ++t) {
    week_rows.push_back(static_cast<long>(meta.week[static_cast<size_t>(t)]) - 1);
    day_rows.push_back(meta.slot[static_cast<size_t>(t)]);
  }
  Value weekly = expand_axis1(embedding_rows(leaf(*tables.week), week_rows), n_nodes);
  Value daily = expand_axis1(embedding_rows(leaf(*tables.day), day_rows), n_nodes);
  Value pe = expand_axis1(constant(position_encoding), n_nodes);

  return add(add(add(add(data, spatial), weekly), daily), pe);
}

}  // namespace flowcast
