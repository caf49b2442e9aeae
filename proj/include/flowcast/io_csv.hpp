#pragma once

#include <string>
#include <vector>

#include "flowcast/data.hpp"
#include "flowcast/kshape.hpp"
#include "flowcast/tensor.hpp"
#include "flowcast/train.hpp"

namespace flowcast {

/// Row-major matrix CSV with a one-line "rows,cols" header.
void write_matrix_csv(const std::string& path, const Tensor& matrix);
Tensor read_matrix_csv(const std::string& path);

/// Pattern CSV: header "N_p,S", one centroid per row.
void write_patterns_csv(const std::string& path, const PatternSet& patterns);
PatternSet read_patterns_csv(const std::string& path);

void write_scaler_json(const std::string& path, const Scaler& scaler);
Scaler read_scaler_json(const std::string& path);

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

}  // namespace flowcast
