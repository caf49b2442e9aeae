#include "flowcast/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "flowcast/errors.hpp"
#include "flowcast/kshape.hpp"

namespace flowcast {

void HeadConfig::validate() const {
  if (h_geo < 0 || h_sem < 0 || h_t < 0 || total() < 1) {
    throw ConfigError("HeadConfig: need at least one attention head");
  }
  if (d < 1 || d % total() != 0) {
    throw ConfigError("HeadConfig: d=" + std::to_string(d) + " is not divisible by " +
                      std::to_string(total()) + " heads");
  }
}

std::vector<std::vector<Tensor>> delay_histories(const Tensor& window_raw, long window) {
  if (window_raw.rank() != 3) {
    throw std::invalid_argument("delay_histories: window must be (T,N,C)");
  }
  if (window < 2) throw std::invalid_argument("delay_histories: window must be >= 2");
  const long t_steps = window_raw.dim(0), n = window_raw.dim(1), c = window_raw.dim(2);
  std::vector<std::vector<Tensor>> out(static_cast<size_t>(t_steps));
  std::vector<double> row(static_cast<size_t>(window));
  for (long t = 0; t < t_steps; ++t) {
    out[static_cast<size_t>(t)].reserve(static_cast<size_t>(c));
    for (long ch = 0; ch < c; ++ch) {
      Tensor hist({n, window});
      for (long i = 0; i < n; ++i) {
        for (long j = 0; j < window; ++j) {
          const long src = std::max(0L, t - window + 1 + j);
          row[static_cast<size_t>(j)] = window_raw.at(src, i, ch);
        }
        znormalize(row);
        for (long j = 0; j < window; ++j) hist.at(i, j) = row[static_cast<size_t>(j)];
      }
      out[static_cast<size_t>(t)].push_back(std::move(hist));
    }
  }
  return out;
}

namespace {

using ad::Value;

Value delay_summary(const std::vector<Tensor>& history_per_channel, const Value& wu_leaf,
                    const Value& memory_keys, const Value& memory_values) {
  Value r;
  for (const Tensor& hist : history_per_channel) {
    if (hist.dim(1) != wu_leaf->val.dim(0)) {
      throw std::invalid_argument("delay_transform: history window " +
                                  std::to_string(hist.dim(1)) + " vs projection rows " +
                                  std::to_string(wu_leaf->val.dim(0)));
    }
    Value u = ad::matmul(ad::constant(hist), wu_leaf);
    Value logits = ad::matmul(u, ad::transpose_last2(memory_keys));
    Value weights = ad::softmax_lastdim(logits);
    Value r_c = ad::matmul(weights, memory_values);
    r = r ? ad::add(r, r_c) : r_c;
  }
  return r;
}

Value apply_dropout(const Value& x, double rate, std::mt19937_64* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  Tensor mask(x->val.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv = 1.0 / (1.0 - rate);
  for (long i = 0; i < mask.size(); ++i) mask[i] = keep(*rng) ? inv : 0.0;
  return ad::hadamard(x, ad::constant(mask));
}

}  // namespace

ad::Value delay_transform(const std::vector<Tensor>& history_per_channel, const Tensor& patterns,
                          Parameter& wu, Parameter& wm, Parameter& wc) {
  if (history_per_channel.empty()) {
    throw std::invalid_argument("delay_transform: no history channels");
  }
  if (patterns.rank() != 2 || patterns.dim(1) != wu.value.dim(0)) {
    throw std::invalid_argument("delay_transform: patterns " + patterns.shape_str() +
                                " do not match projection rows " +
                                std::to_string(wu.value.dim(0)));
  }
  Value pats = ad::constant(patterns);
  Value memory_keys = ad::matmul(pats, ad::leaf(wm));
  Value memory_values = ad::matmul(pats, ad::leaf(wc));
  return delay_summary(history_per_channel, ad::leaf(wu), memory_keys, memory_values);
}

ad::Value encoder_layer(const ad::Value& x, const EncoderLayerParams& params,
                        const HeadConfig& cfg, const Tensor& mask_geo, const Tensor& mask_sem,
                        const Tensor& patterns,
                        const std::vector<std::vector<Tensor>>& histories, long layer_index,
                        double dropout_rate, std::mt19937_64* dropout_rng,
                        AttentionCapture* capture) {
  cfg.validate();
  const long t_steps = x->val.dim(0);
  const long n_nodes = x->val.dim(1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_prime()));
  const bool use_delay = params.delay_wu != nullptr && cfg.h_geo > 0;

  using ad::Value;
  Value memory_keys, memory_values, wu_leaf;
  if (use_delay) {
    Value pats = ad::constant(patterns);
    memory_keys = ad::matmul(pats, ad::leaf(*params.delay_wm));
    memory_values = ad::matmul(pats, ad::leaf(*params.delay_wc));
    wu_leaf = ad::leaf(*params.delay_wu);
  }

  auto run_spatial_head = [&](const Value& xt, const HeadParams& head, const Tensor& mask,
                              const Value& key_shift, const char* kind, long head_index,
                              long slice) {
    Value q = ad::matmul(xt, ad::leaf(*head.wq));
    Value k = ad::matmul(xt, ad::leaf(*head.wk));
    if (key_shift) k = ad::add(k, key_shift);
    Value v = ad::matmul(xt, ad::leaf(*head.wv));
    Value scores = ad::scale(ad::matmul(q, ad::transpose_last2(k)), scale);
    Value attn = ad::softmax_lastdim(scores, &mask);
    if (capture) {
      capture->push_back({layer_index, kind, head_index, slice, attn->val});
    }
    return ad::matmul(attn, v);
  };

  std::vector<std::vector<Value>> geo_slices(static_cast<size_t>(cfg.h_geo));
  std::vector<std::vector<Value>> sem_slices(static_cast<size_t>(cfg.h_sem));
  for (long t = 0; t < t_steps; ++t) {
    Value xt = ad::slice_axis0(x, t);
    Value r_t;
    if (use_delay) {
      if (histories.size() != static_cast<size_t>(t_steps)) {
        throw std::invalid_argument("encoder_layer: histories cover " +
                                    std::to_string(histories.size()) + " slices, input has " +
                                    std::to_string(t_steps));
      }
      r_t = delay_summary(histories[static_cast<size_t>(t)], wu_leaf, memory_keys,
                          memory_values);
    }
    for (long h = 0; h < cfg.h_geo; ++h) {
      geo_slices[static_cast<size_t>(h)].push_back(run_spatial_head(
          xt, params.geo[static_cast<size_t>(h)], mask_geo, r_t, "geo", h, t));
    }
    for (long h = 0; h < cfg.h_sem; ++h) {
      sem_slices[static_cast<size_t>(h)].push_back(run_spatial_head(
          xt, params.sem[static_cast<size_t>(h)], mask_sem, Value(), "sem", h, t));
    }
  }

  std::vector<Value> head_outputs;
  for (auto& slices : geo_slices) head_outputs.push_back(ad::stack_axis0(slices));
  for (auto& slices : sem_slices) head_outputs.push_back(ad::stack_axis0(slices));

  for (long h = 0; h < cfg.h_t; ++h) {
    const HeadParams& head = params.temporal[static_cast<size_t>(h)];
    std::vector<Value> per_node;
    for (long n = 0; n < n_nodes; ++n) {
      Value xn = ad::slice_axis1(x, n);
      Value q = ad::matmul(xn, ad::leaf(*head.wq));
      Value k = ad::matmul(xn, ad::leaf(*head.wk));
      Value v = ad::matmul(xn, ad::leaf(*head.wv));
      Value scores = ad::scale(ad::matmul(q, ad::transpose_last2(k)), scale);
      Value attn = ad::softmax_lastdim(scores);
      if (capture) {
        capture->push_back({layer_index, "temporal", h, n, attn->val});
      }
      per_node.push_back(ad::matmul(attn, v));
    }
    head_outputs.push_back(ad::stack_axis1(per_node));
  }

  Value fused = head_outputs.size() == 1 ? head_outputs[0] : ad::concat_lastdim(head_outputs);
  Value attn_out = ad::matmul(fused, ad::leaf(*params.wo));
  attn_out = apply_dropout(attn_out, dropout_rate, dropout_rng);

  Value y = ad::layer_norm(ad::add(x, attn_out), ad::leaf(*params.ln1_gain),
                           ad::leaf(*params.ln1_bias));
  Value hidden = ad::gelu(ad::add_bias(ad::matmul(y, ad::leaf(*params.ffn_w1)),
                                       ad::leaf(*params.ffn_b1)));
  hidden = apply_dropout(hidden, dropout_rate, dropout_rng);
  Value ffn = ad::add_bias(ad::matmul(hidden, ad::leaf(*params.ffn_w2)),
                           ad::leaf(*params.ffn_b2));
  return ad::layer_norm(ad::add(y, ffn), ad::leaf(*params.ln2_gain),
                        ad::leaf(*params.ln2_bias));
}

}  // namespace flowcast
