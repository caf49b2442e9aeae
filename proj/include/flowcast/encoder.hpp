#pragma once

#include <random>
#include <string>
#include <vector>

#include "flowcast/autodiff.hpp"
#include "flowcast/params.hpp"

namespace flowcast {

struct HeadConfig {
  long h_geo = 2;
  long h_sem = 1;
  long h_t = 1;
  long d = 16;

  long total() const { return h_geo + h_sem + h_t; }
  long d_prime() const { return d / total(); }
  void validate() const;
};

/// Row-stochastic attention matrices captured during a forward pass.
/// Spatial heads yield one N x N matrix per time slice; temporal heads one
/// T x T matrix per node.
struct AttentionEntry {
  long layer = 0;
  std::string head_kind;  // "geo", "sem", "temporal"
  long head_index = 0;
  long slice_or_node = 0;
  Tensor matrix;
};
using AttentionCapture = std::vector<AttentionEntry>;

struct HeadParams {
  Parameter* wq = nullptr;
  Parameter* wk = nullptr;
  Parameter* wv = nullptr;
};

struct EncoderLayerParams {
  std::vector<HeadParams> geo, sem, temporal;
  Parameter* delay_wu = nullptr;  // S x d', null when the delay module is off
  Parameter* delay_wm = nullptr;
  Parameter* delay_wc = nullptr;
  Parameter* wo = nullptr;  // d x d
  Parameter* ln1_gain = nullptr;
  Parameter* ln1_bias = nullptr;
  Parameter* ffn_w1 = nullptr;  // d x 4d
  Parameter* ffn_b1 = nullptr;
  Parameter* ffn_w2 = nullptr;  // 4d x d
  Parameter* ffn_b2 = nullptr;
  Parameter* ln2_gain = nullptr;
  Parameter* ln2_bias = nullptr;
};

/// Per-slice, per-channel delay histories from a raw window (T,N,C): row n
/// of histories[t][c] is the S steps ending at slice t, edge-padded with
/// the window's first value, z-normalized.
std::vector<std::vector<Tensor>> delay_histories(const Tensor& window_raw, long window);

/// Pattern-memory summary of the per-channel histories: project each
/// node's recent window, softmax-compare against the pattern memory keys,
/// take the weighted sum of pattern values, sum over channels. The result
/// (N, d') shifts the geographic attention keys. Returns (N, d').
ad::Value delay_transform(const std::vector<Tensor>& history_per_channel, const Tensor& patterns,
                          Parameter& wu, Parameter& wm, Parameter& wc);

/// One spatial-temporal encoder layer: masked spatial heads (geographic
/// keys shifted by the delay summary), temporal heads, concat + output
/// projection, then post-norm residual FFN.
ad::Value encoder_layer(const ad::Value& x, const EncoderLayerParams& params,
                        const HeadConfig& cfg, const Tensor& mask_geo, const Tensor& mask_sem,
                        const Tensor& patterns,
                        const std::vector<std::vector<Tensor>>& histories, long layer_index,
                        double dropout_rate, std::mt19937_64* dropout_rng,
                        AttentionCapture* capture);

}  // namespace flowcast
