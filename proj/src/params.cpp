#include "flowcast/params.hpp"

#include <cmath>
#include <stdexcept>

namespace flowcast {

Parameter& ParamStore::create(std::string name, Tensor init) {
  if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  list_.push_back(std::make_unique<Parameter>(name, std::move(init)));
  Parameter& p = *list_.back();
  index_.emplace(p.name, &p);
  return p;
}

Parameter* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

Parameter& ParamStore::at(const std::string& name) const {
  Parameter* p = find(name);
  if (!p) throw std::invalid_argument("ParamStore: unknown parameter " + name);
  return *p;
}

long ParamStore::total_size() const {
  long n = 0;
  for (const auto& p : list_) n += p->value.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& p : list_) {
    for (long i = 0; i < p->grad.size(); ++i) p->grad[i] = 0.0;
  }
}

std::vector<Tensor> ParamStore::snapshot_values() const {
  std::vector<Tensor> out;
  out.reserve(list_.size());
  for (const auto& p : list_) out.push_back(p->value);
  return out;
}

void ParamStore::restore_values(const std::vector<Tensor>& snapshot) {
  if (snapshot.size() != list_.size()) {
    throw std::invalid_argument("ParamStore: snapshot size mismatch");
  }
  for (size_t i = 0; i < list_.size(); ++i) {
    if (!snapshot[i].same_shape(list_[i]->value)) {
      throw std::invalid_argument("ParamStore: snapshot shape mismatch for " + list_[i]->name);
    }
    list_[i]->value = snapshot[i];
  }
}

void adamw_step(ParamStore& params, const AdamWConfig& cfg, long step_index) {
  if (step_index < 1) throw std::invalid_argument("adamw_step: step_index must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_index));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_index));
  for (auto& p : params.all()) {
    for (long i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      p->moment1[i] = cfg.beta1 * p->moment1[i] + (1.0 - cfg.beta1) * g;
      p->moment2[i] = cfg.beta2 * p->moment2[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = p->moment1[i] / bc1;
      const double v_hat = p->moment2[i] / bc2;
      p->value[i] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) +
                               cfg.weight_decay * p->value[i]);
    }
  }
}

double clip_global_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params.all()) {
    for (long i = 0; i < p->grad.size(); ++i) sq += p->grad[i] * p->grad[i];
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params.all()) {
      for (long i = 0; i < p->grad.size(); ++i) p->grad[i] *= s;
    }
  }
  return norm;
}

}  // namespace flowcast
