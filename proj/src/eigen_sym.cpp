#include "flowcast/eigen_sym.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace flowcast {

EigenSym eigh(const Tensor& symmetric) {
  if (symmetric.rank() != 2 || symmetric.dim(0) != symmetric.dim(1)) {
    throw std::invalid_argument("eigh: expected square matrix, got " + symmetric.shape_str());
  }
  const long n = symmetric.dim(0);
  Tensor a = symmetric;
  Tensor v({n, n});
  for (long i = 0; i < n; ++i) v.at(i, i) = 1.0;

  auto off_norm = [&]() {
    double s = 0.0;
    for (long i = 0; i < n; ++i)
      for (long j = i + 1; j < n; ++j) s += a.at(i, j) * a.at(i, j);
    return std::sqrt(2.0 * s);
  };

  double scale = 0.0;
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) scale = std::max(scale, std::fabs(a.at(i, j)));
  const double tol = (scale > 0.0 ? scale : 1.0) * 1e-14 * static_cast<double>(n);

  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps && off_norm() > tol; ++sweep) {
    for (long p = 0; p < n - 1; ++p) {
      for (long q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::fabs(apq) <= tol * 1e-3) continue;
        const double app = a.at(p, p);
        const double aqq = a.at(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (long k = 0; k < n; ++k) {
          const double akp = a.at(k, p);
          const double akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (long k = 0; k < n; ++k) {
          const double apk = a.at(p, k);
          const double aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (long k = 0; k < n; ++k) {
          const double vkp = v.at(k, p);
          const double vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<long> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](long i, long j) { return a.at(i, i) < a.at(j, j); });

  EigenSym out;
  out.eigenvalues.resize(static_cast<size_t>(n));
  out.vectors = Tensor({n, n});
  for (long j = 0; j < n; ++j) {
    const long src = order[static_cast<size_t>(j)];
    out.eigenvalues[static_cast<size_t>(j)] = a.at(src, src);
    for (long i = 0; i < n; ++i) out.vectors.at(i, j) = v.at(i, src);
  }
  return out;
}

}  // namespace flowcast
