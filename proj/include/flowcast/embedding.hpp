#pragma once

#include <vector>

#include "flowcast/autodiff.hpp"
#include "flowcast/data.hpp"
#include "flowcast/params.hpp"

namespace flowcast {

/// Sinusoidal position encoding: PE[t,2i] = sin(t / 10000^(2i/d)),
/// PE[t,2i+1] = cos of the same argument. Requires even d.
Tensor temporal_position_encoding(long steps, long dim);

/// Handles to the embedding parameters inside a ParamStore.
struct EmbeddingTables {
  Parameter* data_w = nullptr;  // C x d
  Parameter* data_b = nullptr;  // d
  Parameter* lap_w = nullptr;   // k x d
  Parameter* lap_b = nullptr;   // d
  Parameter* week = nullptr;    // 7 x d
  Parameter* day = nullptr;     // slots_per_day x d
};

/// X_emb = data projection + Laplacian projection + weekly row + daily row
/// + position encoding, broadcast to (T, N, d).
ad::Value embed(const Tensor& window_norm, const TimeMeta& meta, const Tensor& basis,
                const EmbeddingTables& tables, const Tensor& position_encoding);

}  // namespace flowcast
