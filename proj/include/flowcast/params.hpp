#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowcast/tensor.hpp"

namespace flowcast {

/// A named learnable tensor with its gradient and AdamW moment buffers.
/// Only backward() and adamw_step() mutate it.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor moment1;
  Tensor moment2;

  Parameter(std::string n, Tensor init)
      : name(std::move(n)),
        value(std::move(init)),
        grad(value.shape()),
        moment1(value.shape()),
        moment2(value.shape()) {}
};

/// Owns parameters in creation order; the order fixes initialization RNG
/// draws, optimizer iteration, and checkpoint layout.
class ParamStore {
 public:
  Parameter& create(std::string name, Tensor init);
  Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name) const;

  const std::vector<std::unique_ptr<Parameter>>& all() const { return list_; }
  long count() const { return static_cast<long>(list_.size()); }
  long total_size() const;

  void zero_grads();

  std::vector<Tensor> snapshot_values() const;
  void restore_values(const std::vector<Tensor>& snapshot);

 private:
  std::vector<std::unique_ptr<Parameter>> list_;
  std::unordered_map<std::string, Parameter*> index_;
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled-decay AdamW with bias correction:
/// p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p).
void adamw_step(ParamStore& params, const AdamWConfig& cfg, long step_index);

/// Scales all gradients by min(1, max_norm / ||g||_2) over the joint
/// gradient vector. Returns the pre-clip norm.
double clip_global_norm(ParamStore& params, double max_norm);

}  // namespace flowcast
