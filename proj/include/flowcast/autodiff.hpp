#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "flowcast/params.hpp"
#include "flowcast/tensor.hpp"

namespace flowcast::ad {

/// One tape node. Ops never mutate their inputs; gradients accumulate, so
/// a node used by several consumers receives the summed adjoint.
struct Node {
  Tensor val;
  Tensor grad;
  bool needs_grad = false;
  bool grad_ready = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  Parameter* param = nullptr;

  Tensor& ensure_grad();
  void accumulate(const Tensor& delta);
};

using Value = std::shared_ptr<Node>;

Value constant(Tensor v);
Value leaf(Parameter& p);

// Dense ops. Each registers its reverse rule; shape violations throw
// std::invalid_argument naming the shapes.
Value matmul(const Value& a, const Value& b);  // a: (...,m,k), b: (k,n)
Value add(const Value& a, const Value& b);     // same shape
Value sub(const Value& a, const Value& b);
Value add_bias(const Value& x, const Value& b);  // b: rank 1, last dim of x
Value hadamard(const Value& a, const Value& b);
Value scale(const Value& x, double c);
Value concat_lastdim(const std::vector<Value>& parts);
Value transpose_last2(const Value& x);
Value reshape(const Value& x, std::vector<long> shape);
Value slice_axis0(const Value& x, long index);            // (A,...) -> (...)
Value stack_axis0(const std::vector<Value>& parts);
Value slice_axis1(const Value& x, long index);            // (T,N,d) -> (T,d)
Value stack_axis1(const std::vector<Value>& parts);       // N x (T,d) -> (T,N,d)
Value expand_axis0(const Value& x, long count);           // (N,d) -> (count,N,d)
Value expand_axis1(const Value& x, long count);           // (T,d) -> (T,count,d)

/// Row softmax over the last dimension, numerically stabilized. keep_mask
/// (optional) must match x's trailing dimensions; zeros mask positions out
/// exactly (additive -inf semantics). A fully masked row is an error.
Value softmax_lastdim(const Value& x, const Tensor* keep_mask = nullptr);

/// Per-position normalization over the last dimension (eps 1e-5), then
/// an affine map by gain/bias vectors.
Value layer_norm(const Value& x, const Value& gain, const Value& bias);

Value gelu(const Value& x);

/// Gathers rows of a table: out[i,:] = table[rows[i],:].
Value embedding_rows(const Value& table, const std::vector<long>& rows);

/// y[...,c] = x[...,c] * scale[c] + shift[c] with constant vectors.
Value channel_affine(const Value& x, const Tensor& scale_c, const Tensor& shift_c);

Value sum_all(const Value& x);  // scalar

/// Scalar sum over weight[i] * |pred[i] - target[i]| with constant target
/// and weight tensors; the derivative at a zero residual is taken as 0.
Value masked_abs_sum(const Value& pred, const Tensor& target, const Tensor& weight);

/// Huber variant: 0.5 e^2 for |e| <= delta, delta(|e| - delta/2) beyond.
Value masked_huber_sum(const Value& pred, const Tensor& target, const Tensor& weight,
                       double delta);

/// Reverse sweep from a scalar loss; writes into every reachable
/// Parameter's grad (accumulating). `seed` is the adjoint of the loss.
void backward(const Value& loss, double seed = 1.0);

}  // namespace flowcast::ad
