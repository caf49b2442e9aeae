#include "flowcast/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

#include "flowcast/errors.hpp"

namespace flowcast::ad {

namespace {

[[noreturn]] void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + a.shape_str() + " and " +
                              b.shape_str());
}

Value make_node(Tensor val, std::vector<Value> parents, std::function<void(Node&)> back) {
  auto node = std::make_shared<Node>();
  node->val = std::move(val);
  node->parents = std::move(parents);
  for (const auto& p : node->parents) node->needs_grad |= p->needs_grad;
  if (node->needs_grad) node->backward_fn = std::move(back);
  return node;
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (!grad_ready) {
    grad = Tensor(val.shape());
    grad_ready = true;
  }
  return grad;
}

void Node::accumulate(const Tensor& delta) {
  Tensor& g = ensure_grad();
  for (long i = 0; i < g.size(); ++i) g[i] += delta[i];
}

Value constant(Tensor v) {
  auto node = std::make_shared<Node>();
  node->val = std::move(v);
  return node;
}

Value leaf(Parameter& p) {
  auto node = std::make_shared<Node>();
  node->val = p.value;
  node->needs_grad = true;
  node->param = &p;
  return node;
}

Value matmul(const Value& a, const Value& b) {
  if (a->val.rank() < 2 || b->val.rank() != 2) shape_error("matmul", a->val, b->val);
  const long k = a->val.dim(a->val.rank() - 1);
  const long n = b->val.dim(1);
  if (b->val.dim(0) != k) shape_error("matmul", a->val, b->val);
  const long rows = a->val.size() / k;

  std::vector<long> out_shape = a->val.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  {
    const double* pa = a->val.data();
    const double* pb = b->val.data();
    double* po = out.data();
    for (long r = 0; r < rows; ++r) {
      for (long kk = 0; kk < k; ++kk) {
        const double av = pa[r * k + kk];
        if (av == 0.0) continue;
        const double* brow = pb + kk * n;
        double* orow = po + r * n;
        for (long j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }
  return make_node(std::move(out), {a, b}, [k, n, rows](Node& self) {
    const Tensor& g = self.grad;
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.needs_grad) {
      Tensor& da = na.ensure_grad();
      const double* pb = nb.val.data();
      for (long r = 0; r < rows; ++r) {
        const double* grow = g.data() + r * n;
        double* darow = da.data() + r * k;
        for (long kk = 0; kk < k; ++kk) {
          const double* brow = pb + kk * n;
          double acc = 0.0;
          for (long j = 0; j < n; ++j) acc += grow[j] * brow[j];
          darow[kk] += acc;
        }
      }
    }
    if (nb.needs_grad) {
      Tensor& db = nb.ensure_grad();
      const double* pa = na.val.data();
      for (long r = 0; r < rows; ++r) {
        const double* grow = g.data() + r * n;
        const double* arow = pa + r * k;
        for (long kk = 0; kk < k; ++kk) {
          const double av = arow[kk];
          if (av == 0.0) continue;
          double* dbrow = db.data() + kk * n;
          for (long j = 0; j < n; ++j) dbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Value add(const Value& a, const Value& b) {
  if (!a->val.same_shape(b->val)) shape_error("add", a->val, b->val);
  Tensor out = a->val;
  for (long i = 0; i < out.size(); ++i) out[i] += b->val[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    for (int p = 0; p < 2; ++p) {
      if (self.parents[p]->needs_grad) self.parents[p]->accumulate(self.grad);
    }
  });
}

Value sub(const Value& a, const Value& b) {
  if (!a->val.same_shape(b->val)) shape_error("sub", a->val, b->val);
  Tensor out = a->val;
  for (long i = 0; i < out.size(); ++i) out[i] -= b->val[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->needs_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->needs_grad) {
      Tensor& db = self.parents[1]->ensure_grad();
      for (long i = 0; i < db.size(); ++i) db[i] -= self.grad[i];
    }
  });
}

Value add_bias(const Value& x, const Value& b) {
  if (b->val.rank() != 1 || x->val.rank() < 1 ||
      x->val.dim(x->val.rank() - 1) != b->val.dim(0)) {
    shape_error("add_bias", x->val, b->val);
  }
  const long d = b->val.dim(0);
  const long rows = x->val.size() / d;
  Tensor out = x->val;
  for (long r = 0; r < rows; ++r)
    for (long j = 0; j < d; ++j) out[r * d + j] += b->val[j];
  return make_node(std::move(out), {x, b}, [d, rows](Node& self) {
    if (self.parents[0]->needs_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->needs_grad) {
      Tensor& db = self.parents[1]->ensure_grad();
      for (long r = 0; r < rows; ++r)
        for (long j = 0; j < d; ++j) db[j] += self.grad[r * d + j];
    }
  });
}

Value hadamard(const Value& a, const Value& b) {
  if (!a->val.same_shape(b->val)) shape_error("hadamard", a->val, b->val);
  Tensor out = a->val;
  for (long i = 0; i < out.size(); ++i) out[i] *= b->val[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.needs_grad) {
      Tensor& da = na.ensure_grad();
      for (long i = 0; i < da.size(); ++i) da[i] += self.grad[i] * nb.val[i];
    }
    if (nb.needs_grad) {
      Tensor& db = nb.ensure_grad();
      for (long i = 0; i < db.size(); ++i) db[i] += self.grad[i] * na.val[i];
    }
  });
}

Value scale(const Value& x, double c) {
  Tensor out = x->val;
  for (long i = 0; i < out.size(); ++i) out[i] *= c;
  return make_node(std::move(out), {x}, [c](Node& self) {
    if (!self.parents[0]->needs_grad) return;
    Tensor& dx = self.parents[0]->ensure_grad();
    for (long i = 0; i < dx.size(); ++i) dx[i] += c * self.grad[i];
  });
}

Value concat_lastdim(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_lastdim: no inputs");
  const long rank = parts[0]->val.rank();
  std::vector<long> lead(parts[0]->val.shape().begin(), parts[0]->val.shape().end() - 1);
  long total_last = 0;
  std::vector<long> lasts;
  for (const auto& p : parts) {
    if (p->val.rank() != rank ||
        !std::equal(lead.begin(), lead.end(), p->val.shape().begin())) {
      shape_error("concat_lastdim", parts[0]->val, p->val);
    }
    lasts.push_back(p->val.dim(rank - 1));
    total_last += lasts.back();
  }
  std::vector<long> out_shape = lead;
  out_shape.push_back(total_last);
  Tensor out(out_shape);
  const long rows = out.size() / total_last;
  long offset = 0;
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    const long w = lasts[pi];
    const double* src = parts[pi]->val.data();
    for (long r = 0; r < rows; ++r)
      for (long j = 0; j < w; ++j) out[r * total_last + offset + j] = src[r * w + j];
    offset += w;
  }
  return make_node(std::move(out), parts, [lasts, total_last, rows](Node& self) {
    long off = 0;
    for (size_t pi = 0; pi < self.parents.size(); ++pi) {
      const long w = lasts[pi];
      if (self.parents[pi]->needs_grad) {
        Tensor& dp = self.parents[pi]->ensure_grad();
        for (long r = 0; r < rows; ++r)
          for (long j = 0; j < w; ++j) dp[r * w + j] += self.grad[r * total_last + off + j];
      }
      off += w;
    }
  });
}

Value transpose_last2(const Value& x) {
  if (x->val.rank() < 2) throw std::invalid_argument("transpose_last2: rank < 2");
  const long rank = x->val.rank();
  const long m = x->val.dim(rank - 2);
  const long n = x->val.dim(rank - 1);
  const long batch = x->val.size() / (m * n);
  std::vector<long> out_shape = x->val.shape();
  std::swap(out_shape[rank - 2], out_shape[rank - 1]);
  Tensor out(out_shape);
  for (long b = 0; b < batch; ++b) {
    const double* src = x->val.data() + b * m * n;
    double* dst = out.data() + b * m * n;
    for (long i = 0; i < m; ++i)
      for (long j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  }
  return make_node(std::move(out), {x}, [m, n, batch](Node& self) {
    if (!self.parents[0]->needs_grad) return;
    Tensor& dx = self.parents[0]->ensure_grad();
    for (long b = 0; b < batch; ++b) {
      const double* g = self.grad.data() + b * m * n;
      double* dst = dx.data() + b * m * n;
      for (long i = 0; i < m; ++i)
        for (long j = 0; j < n; ++j) dst[i * n + j] += g[j * m + i];
    }
  });
}

Value reshape(const Value& x, std::vector<long> shape) {
  if (shape_product(shape) != x->val.size()) {
    throw std::invalid_argument("reshape: " + x->val.shape_str() + " to " +
                                Tensor::shape_str(shape) + " changes size");
  }
  Tensor out = Tensor::from_data(std::move(shape), x->val.values());
  return make_node(std::move(out), {x}, [](Node& self) {
    if (!self.parents[0]->needs_grad) return;
    Tensor& dx = self.parents[0]->ensure_grad();
    for (long i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
  });
}

Value slice_axis0(const Value& x, long index) {
  if (x->val.rank() < 2 || index < 0 || index >= x->val.dim(0)) {
    throw std::invalid_argument("slice_axis0: index " + std::to_string(index) + " out of " +
                                x->val.shape_str());
  }
  std::vector<long> out_shape(x->val.shape().begin() + 1, x->val.shape().end());
  const long block = shape_product(out_shape);
  Tensor out(out_shape);
  const double* src = x->val.data() + index * block;
  for (long i = 0; i < block; ++i) out[i] = src[i];
  return make_node(std::move(out), {x}, [index, block](Node& self) {
    if (!self.parents[0]->needs_grad) return;
    Tensor& dx = self.parents[0]->ensure_grad();
    double* dst = dx.data() + index * block;
    for (long i = 0; i < block; ++i) dst[i] += self.grad[i];
  });
}

Value stack_axis0(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack_axis0: no inputs");
  for (const auto& p : parts) {
    if (!p->val.same_shape(parts[0]->val)) shape_error("stack_axis0", parts[0]->val, p->val);
  }
  const long block = parts[0]->val.size();
  std::vector<long> out_shape;
  out_shape.push_back(static_cast<long>(parts.size()));
  for (long d : parts[0]->val.shape()) out_shape.push_back(d);
  Tensor out(out_shape);
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    const double* src = parts[pi]->val.data();
    double* dst = out.data() + static_cast<long>(pi) * block;
    for (long i = 0; i < block; ++i) dst[i] = src[i];
  }
  return make_node(std::move(out), parts, [block](Node& self) {
    for (size_t pi = 0; pi < self.parents.size(); ++pi) {
      if (!self.parents[pi]->needs_grad) continue;
      Tensor& dp = self.parents[pi]->ensure_grad();
      const double* g = self.grad.data() + static_cast<long>(pi) * block;
      for (long i = 0; i < block; ++i) dp[i] += g[i];
    }
  });
}

Value slice_axis1(const Value& x, long index) {
  if (x->val.rank() != 3 || index < 0 || index >= x->val.dim(1)) {
    throw std::invalid_argument("slice_axis1: index " + std::to_string(index) + " out of " +
                                x->val.shape_str());
  }
  const long t = x->val.dim(0), n = x->val.dim(1), d = x->val.dim(2);
  Tensor out({t, d});
  for (long i = 0; i < t; ++i)
    for (long j = 0; j < d; ++j) out.at(i, j) = x->val.at(i, index, j);
  return make_node(std::move(out), {x}, [index, t, n, d](Node& self) {
    if (!self.parents[0]->needs_grad) return;
    Tensor& dx = self.parents[0]->ensure_grad();
    for (long i = 0; i < t; ++i) {
      double* row = dx.data() + (i * n + index) * d;
      const double* g = self.grad.data() + i * d;
      for (long j = 0; j < d; ++j) row[j] += g[j];
    }
  });
}

Value stack_axis1(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack_axis1: no inputs");
  for (const auto& p : parts) {
    if (p->val.rank() != 2 || !p->val.same_shape(parts[0]->val)) {
      shape_error("stack_axis1", parts[0]->val, p->val);
    }
  }
  const long t = parts[0]->val.dim(0), d = parts[0]->val.dim(1);
  const long n = static_cast<long>(parts.size());
  Tensor out({t, n, d});
  for (long pi = 0; pi < n; ++pi) {
    const double* src = parts[static_cast<size_t>(pi)]->val.data();
    for (long i = 0; i < t; ++i)
      for (long j = 0; j < d; ++j) out.at(i, pi, j) = src[i * d + j];
  }
  return make_node(std::move(out), parts, [t, n, d](Node& self) {
    for (long pi = 0; pi < n; ++pi) {
      if (!self.parents[static_cast<size_t>(pi)]->needs_grad) continue;
      Tensor& dp = self.parents[static_cast<size_t>(pi)]->ensure_grad();
      for (long i = 0; i < t; ++i) {
        const double* g = self.grad.data() + (i * n + pi) * d;
        for (long j = 0; j < d; ++j) dp[i * d + j] += g[j];
      }
    }
  });
}

Value expand_axis0(const Value& x, long count) {
  if (count < 1) throw std::invalid_argument("expand_axis0: count < 1");
  const long block = x->val.size();
  std::vector<long> out_shape;
  out_shape.push_back(count);
  for (long d : x->val.shape()) out_shape.push_back(d);
  Tensor out(out_shape);
  for (long c = 0; c < count; ++c) {
    double* dst = out.data() + c * block;
    for (long i = 0; i < block; ++i) dst[i] = x->val[i];
  }
  return make_node(std::move(out), {x}, [count, block](Node& self) {
    if (!self.parents[0]->needs_grad) return;
    Tensor& dx = self.parents[0]->ensure_grad();
    for (long c = 0; c < count; ++c) {
      const double* g = self.grad.data() + c * block;
      for (long i = 0; i < block; ++i) dx[i] += g[i];
    }
  });
}

Value expand_axis1(const Value& x, long count) {
  if (x->val.rank() != 2 || count < 1)
    throw std::invalid_argument("expand_axis1: need rank-2 input and count >= 1");
  const long t = x->val.dim(0), d = x->val.dim(1);
  Tensor out({t, count, d});
  for (long i = 0; i < t; ++i)
    for (long c = 0; c < count; ++c)
      for (long j = 0; j < d; ++j) out.at(i, c, j) = x->val.at(i, j);
  return make_node(std::move(out), {x}, [t, count, d](Node& self) {
    if (!self.parents[0]->needs_grad) return;
    Tensor& dx = self.parents[0]->ensure_grad();
    for (long i = 0; i < t; ++i)
      for (long c = 0; c < count; ++c) {
        const double* g = self.grad.data() + (i * count + c) * d;
        for (long j = 0; j < d; ++j) dx[i * d + j] += g[j];
      }
  });
}

Value softmax_lastdim(const Value& x, const Tensor* keep_mask) {
  const long d = x->val.dim(x->val.rank() - 1);
  const long rows = x->val.size() / d;
  long mask_rows = 0;
  if (keep_mask) {
    // The mask shape must be a suffix of x's shape (trailing-dim broadcast).
    const auto& xs = x->val.shape();
    const auto& ms = keep_mask->shape();
    const bool suffix =
        ms.size() >= 1 && ms.size() <= xs.size() &&
        std::equal(ms.rbegin(), ms.rend(), xs.rbegin());
    if (!suffix) shape_error("softmax_lastdim", x->val, *keep_mask);
    mask_rows = std::max(1L, keep_mask->size() / d);
  }
  Tensor out(x->val.shape());
  for (long r = 0; r < rows; ++r) {
    const double* xr = x->val.data() + r * d;
    const double* mr = keep_mask ? keep_mask->data() + (r % mask_rows) * d : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    for (long j = 0; j < d; ++j) {
      if (!mr || mr[j] != 0.0) mx = std::max(mx, xr[j]);
    }
    if (!std::isfinite(mx)) {
      throw NumericError("softmax_lastdim: row " + std::to_string(r) + " is fully masked");
    }
    double sum = 0.0;
    double* yr = out.data() + r * d;
    for (long j = 0; j < d; ++j) {
      yr[j] = (!mr || mr[j] != 0.0) ? std::exp(xr[j] - mx) : 0.0;
      sum += yr[j];
    }
    for (long j = 0; j < d; ++j) yr[j] /= sum;
  }
  return make_node(std::move(out), {x}, [d, rows](Node& self) {
    if (!self.parents[0]->needs_grad) return;
    Tensor& dx = self.parents[0]->ensure_grad();
    for (long r = 0; r < rows; ++r) {
      const double* y = self.val.data() + r * d;
      const double* g = self.grad.data() + r * d;
      double dot = 0.0;
      for (long j = 0; j < d; ++j) dot += g[j] * y[j];
      double* dxr = dx.data() + r * d;
      for (long j = 0; j < d; ++j) dxr[j] += y[j] * (g[j] - dot);
    }
  });
}

Value layer_norm(const Value& x, const Value& gain, const Value& bias) {
  constexpr double eps = 1e-5;
  const long d = x->val.dim(x->val.rank() - 1);
  if (gain->val.rank() != 1 || gain->val.dim(0) != d) shape_error("layer_norm", x->val, gain->val);
  if (bias->val.rank() != 1 || bias->val.dim(0) != d) shape_error("layer_norm", x->val, bias->val);
  const long rows = x->val.size() / d;
  Tensor out(x->val.shape());
  for (long r = 0; r < rows; ++r) {
    const double* xr = x->val.data() + r * d;
    double mean = 0.0;
    for (long j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (long j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    double* yr = out.data() + r * d;
    for (long j = 0; j < d; ++j) yr[j] = gain->val[j] * (xr[j] - mean) * inv + bias->val[j];
  }
  return make_node(std::move(out), {x, gain, bias}, [d, rows](Node& self) {
    Node& nx = *self.parents[0];
    Node& ng = *self.parents[1];
    Node& nb = *self.parents[2];
    const double dd = static_cast<double>(d);
    for (long r = 0; r < rows; ++r) {
      const double* xr = nx.val.data() + r * d;
      const double* g = self.grad.data() + r * d;
      double mean = 0.0;
      for (long j = 0; j < d; ++j) mean += xr[j];
      mean /= dd;
      double var = 0.0;
      for (long j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
      var /= dd;
      const double inv = 1.0 / std::sqrt(var + eps);
      if (ng.needs_grad || nb.needs_grad) {
        Tensor& dg = ng.ensure_grad();
        Tensor& db = nb.ensure_grad();
        for (long j = 0; j < d; ++j) {
          dg[j] += g[j] * (xr[j] - mean) * inv;
          db[j] += g[j];
        }
      }
      if (nx.needs_grad) {
        // dxhat = g * gain; dx via the standard layer-norm backward
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (long j = 0; j < d; ++j) {
          const double xhat = (xr[j] - mean) * inv;
          const double dxhat = g[j] * ng.val[j];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
        }
        Tensor& dx = nx.ensure_grad();
        double* dxr = dx.data() + r * d;
        for (long j = 0; j < d; ++j) {
          const double xhat = (xr[j] - mean) * inv;
          const double dxhat = g[j] * ng.val[j];
          dxr[j] += inv * (dxhat - sum_dxhat / dd - xhat * sum_dxhat_xhat / dd);
        }
      }
    }
  });
}

Value gelu(const Value& x) {
  Tensor out(x->val.shape());
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  for (long i = 0; i < out.size(); ++i) {
    const double v = x->val[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
  return make_node(std::move(out), {x}, [](Node& self) {
    if (!self.parents[0]->needs_grad) return;
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    Tensor& dx = self.parents[0]->ensure_grad();
    const Tensor& xv = self.parents[0]->val;
    for (long i = 0; i < dx.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
      dx[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Value embedding_rows(const Value& table, const std::vector<long>& rows) {
  if (table->val.rank() != 2) throw std::invalid_argument("embedding_rows: table must be rank 2");
  const long r_count = table->val.dim(0), d = table->val.dim(1);
  for (long r : rows) {
    if (r < 0 || r >= r_count) {
      throw std::invalid_argument("embedding_rows: row " + std::to_string(r) + " out of " +
                                  table->val.shape_str());
    }
  }
  Tensor out({static_cast<long>(rows.size()), d});
  for (size_t i = 0; i < rows.size(); ++i)
    for (long j = 0; j < d; ++j) out.at(static_cast<long>(i), j) = table->val.at(rows[i], j);
  return make_node(std::move(out), {table}, [rows, d](Node& self) {
    if (!self.parents[0]->needs_grad) return;
    Tensor& dt = self.parents[0]->ensure_grad();
    for (size_t i = 0; i < rows.size(); ++i) {
      const double* g = self.grad.data() + static_cast<long>(i) * d;
      double* trow = dt.data() + rows[i] * d;
      for (long j = 0; j < d; ++j) trow[j] += g[j];
    }
  });
}

Value channel_affine(const Value& x, const Tensor& scale_c, const Tensor& shift_c) {
  const long c = x->val.dim(x->val.rank() - 1);
  if (scale_c.rank() != 1 || scale_c.dim(0) != c) shape_error("channel_affine", x->val, scale_c);
  if (shift_c.rank() != 1 || shift_c.dim(0) != c) shape_error("channel_affine", x->val, shift_c);
  const long rows = x->val.size() / c;
  Tensor out(x->val.shape());
  for (long r = 0; r < rows; ++r)
    for (long j = 0; j < c; ++j) out[r * c + j] = x->val[r * c + j] * scale_c[j] + shift_c[j];
  Tensor scale_copy = scale_c;
  return make_node(std::move(out), {x}, [scale_copy, c, rows](Node& self) {
    if (!self.parents[0]->needs_grad) return;
    Tensor& dx = self.parents[0]->ensure_grad();
    for (long r = 0; r < rows; ++r)
      for (long j = 0; j < c; ++j) dx[r * c + j] += self.grad[r * c + j] * scale_copy[j];
  });
}

Value sum_all(const Value& x) {
  double s = 0.0;
  for (long i = 0; i < x->val.size(); ++i) s += x->val[i];
  return make_node(Tensor::scalar(s), {x}, [](Node& self) {
    if (!self.parents[0]->needs_grad) return;
    Tensor& dx = self.parents[0]->ensure_grad();
    const double g = self.grad[0];
    for (long i = 0; i < dx.size(); ++i) dx[i] += g;
  });
}

Value masked_abs_sum(const Value& pred, const Tensor& target, const Tensor& weight) {
  if (!pred->val.same_shape(target)) shape_error("masked_abs_sum", pred->val, target);
  if (!pred->val.same_shape(weight)) shape_error("masked_abs_sum", pred->val, weight);
  double s = 0.0;
  for (long i = 0; i < pred->val.size(); ++i) {
    s += weight[i] * std::fabs(pred->val[i] - target[i]);
  }
  Tensor t_copy = target, w_copy = weight;
  return make_node(Tensor::scalar(s), {pred}, [t_copy, w_copy](Node& self) {
    if (!self.parents[0]->needs_grad) return;
    Tensor& dp = self.parents[0]->ensure_grad();
    const Tensor& pv = self.parents[0]->val;
    const double g = self.grad[0];
    for (long i = 0; i < dp.size(); ++i) {
      const double diff = pv[i] - t_copy[i];
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      dp[i] += g * w_copy[i] * sign;
    }
  });
}

Value masked_huber_sum(const Value& pred, const Tensor& target, const Tensor& weight,
                       double delta) {
  if (!pred->val.same_shape(target)) shape_error("masked_huber_sum", pred->val, target);
  if (!pred->val.same_shape(weight)) shape_error("masked_huber_sum", pred->val, weight);
  if (delta <= 0.0) throw std::invalid_argument("masked_huber_sum: delta must be positive");
  double s = 0.0;
  for (long i = 0; i < pred->val.size(); ++i) {
    const double e = std::fabs(pred->val[i] - target[i]);
    s += weight[i] * (e <= delta ? 0.5 * e * e : delta * (e - 0.5 * delta));
  }
  Tensor t_copy = target, w_copy = weight;
  return make_node(Tensor::scalar(s), {pred}, [t_copy, w_copy, delta](Node& self) {
    if (!self.parents[0]->needs_grad) return;
    Tensor& dp = self.parents[0]->ensure_grad();
    const Tensor& pv = self.parents[0]->val;
    const double g = self.grad[0];
    for (long i = 0; i < dp.size(); ++i) {
      const double diff = pv[i] - t_copy[i];
      const double clipped = std::clamp(diff, -delta, delta);
      dp[i] += g * w_copy[i] * clipped;
    }
  });
}

void backward(const Value& loss, double seed) {
  if (loss->val.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + loss->val.shape_str());
  }
  if (!loss->needs_grad) return;

  // Iterative post-order over needs_grad nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    Node* node = stack.back().first;
    size_t next = stack.back().second;
    if (next < node->parents.size()) {
      stack.back().second = next + 1;
      Node* p = node->parents[next].get();
      if (p->needs_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->ensure_grad()[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->grad_ready) continue;  // no adjoint reached this node
    if (node->backward_fn) node->backward_fn(*node);
    if (node->param) {
      Tensor& pg = node->param->grad;
      for (long i = 0; i < pg.size(); ++i) pg[i] += node->grad[i];
    }
  }
}

}  // namespace flowcast::ad
