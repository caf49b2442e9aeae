#pragma once

#include <vector>

#include "flowcast/tensor.hpp"

namespace flowcast {

struct EigenSym {
  std::vector<double> eigenvalues;  // ascending
  Tensor vectors;                   // n x n, column j pairs with eigenvalues[j]
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (n x n).
/// Deterministic sweep order, so repeated calls on the same input give
/// bit-identical output. Eigenvalues sorted ascending, ties kept in
/// sweep order.
EigenSym eigh(const Tensor& symmetric);

}  // namespace flowcast
