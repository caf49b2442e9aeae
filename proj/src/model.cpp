#include "flowcast/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "flowcast/errors.hpp"

namespace flowcast {

void ModelConfig::validate() const {
  if (nodes < 1 || channels < 1 || input_steps < 1 || output_steps < 1) {
    throw ConfigError("ModelConfig: T, T', N, C must all be positive");
  }
  if (d < 2 || d % 2 != 0) {
    throw ConfigError("ModelConfig: d must be even for the position encoding");
  }
  heads().validate();
  if (d_sk < 1 || layers < 1) throw ConfigError("ModelConfig: d_sk and layers must be >= 1");
  if (lambda_hops < 0) throw ConfigError("ModelConfig: lambda must be >= 0");
  if (sem_neighbors < 0 || sem_neighbors >= nodes) {
    throw ConfigError("ModelConfig: semantic neighbour count must be in [0, N)");
  }
  if (n_patterns < 1 || pattern_window < 2) {
    throw ConfigError("ModelConfig: need n_patterns >= 1 and pattern_window >= 2");
  }
  if (laplacian_k < 1 || laplacian_k >= nodes) {
    throw ConfigError("ModelConfig: laplacian_k must be in [1, N)");
  }
  if (interval_minutes <= 0 || 1440 % interval_minutes != 0) {
    throw ConfigError("ModelConfig: interval_minutes must divide 1440");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("ModelConfig: dropout must be in [0,1)");
}

Model::Model(ModelConfig cfg, PreprocessArtifacts artifacts)
    : cfg_(cfg), artifacts_(std::move(artifacts)) {
  cfg_.validate();
  const long n = cfg_.nodes;
  if (artifacts_.mask_geo.shape() != std::vector<long>{n, n} ||
      artifacts_.mask_sem.shape() != std::vector<long>{n, n}) {
    throw ConfigError("Model: masks must be N x N for N=" + std::to_string(n));
  }
  if (artifacts_.basis.shape() != std::vector<long>{n, cfg_.laplacian_k}) {
    throw ConfigError("Model: basis " + artifacts_.basis.shape_str() + " does not match N=" +
                      std::to_string(n) + ", k=" + std::to_string(cfg_.laplacian_k));
  }
  if (cfg_.delay_enabled) {
    if (artifacts_.patterns.centroids.shape() !=
        std::vector<long>{cfg_.n_patterns, cfg_.pattern_window}) {
      throw ConfigError("Model: pattern set " + artifacts_.patterns.centroids.shape_str() +
                        " does not match N_p=" + std::to_string(cfg_.n_patterns) + ", S=" +
                        std::to_string(cfg_.pattern_window));
    }
  }
  if (static_cast<long>(artifacts_.scaler.mean.size()) != cfg_.channels) {
    throw ConfigError("Model: scaler covers " + std::to_string(artifacts_.scaler.mean.size()) +
                      " channels, config says " + std::to_string(cfg_.channels));
  }
  all_ones_mask_ = Tensor::full({n, n}, 1.0);
  position_encoding_ = temporal_position_encoding(cfg_.input_steps, cfg_.d);
  init_parameters();
}

void Model::init_parameters() {
  std::mt19937_64 rng(cfg_.seed);
  auto uniform = [&rng](double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return [&rng, dist]() mutable { return dist(rng); };
  };

  auto linear = [&](const std::string& name, long rows, long cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    Tensor w({rows, cols});
    auto draw = uniform(-bound, bound);
    for (long i = 0; i < w.size(); ++i) w[i] = draw();
    return &params_.create(name, std::move(w));
  };
  auto bias = [&](const std::string& name, long dim) {
    return &params_.create(name, Tensor({dim}));
  };
  auto table = [&](const std::string& name, long rows, long cols) {
    Tensor t({rows, cols});
    auto draw = uniform(-0.04, 0.04);
    for (long i = 0; i < t.size(); ++i) t[i] = draw();
    return &params_.create(name, std::move(t));
  };

  const long d = cfg_.d;
  const long dp = cfg_.heads().d_prime();

  tables_.data_w = linear("embed.data.w", cfg_.channels, d);
  tables_.data_b = bias("embed.data.b", d);
  tables_.lap_w = linear("embed.lap.w", cfg_.laplacian_k, d);
  tables_.lap_b = bias("embed.lap.b", d);
  tables_.week = table("embed.week", 7, d);
  tables_.day = table("embed.day", cfg_.slots_per_day(), d);

  layer_params_.resize(static_cast<size_t>(cfg_.layers));
  for (long l = 0; l < cfg_.layers; ++l) {
    EncoderLayerParams& lp = layer_params_[static_cast<size_t>(l)];
    const std::string prefix = "enc" + std::to_string(l) + ".";
    auto heads = [&](const char* kind, long count) {
      std::vector<HeadParams> out;
      for (long h = 0; h < count; ++h) {
        const std::string base = prefix + kind + std::to_string(h) + ".";
        out.push_back(HeadParams{linear(base + "wq", d, dp), linear(base + "wk", d, dp),
                                 linear(base + "wv", d, dp)});
      }
      return out;
    };
    lp.geo = heads("geo", cfg_.h_geo);
    lp.sem = heads("sem", cfg_.h_sem);
    lp.temporal = heads("tem", cfg_.h_t);
    if (cfg_.delay_enabled && cfg_.h_geo > 0) {
      lp.delay_wu = linear(prefix + "delay.wu", cfg_.pattern_window, dp);
      lp.delay_wm = linear(prefix + "delay.wm", cfg_.pattern_window, dp);
      lp.delay_wc = linear(prefix + "delay.wc", cfg_.pattern_window, dp);
    }
    lp.wo = linear(prefix + "wo", d, d);
    lp.ln1_gain = &params_.create(prefix + "ln1.g", Tensor::full({d}, 1.0));
    lp.ln1_bias = bias(prefix + "ln1.b", d);
    lp.ffn_w1 = linear(prefix + "ffn.w1", d, 4 * d);
    lp.ffn_b1 = bias(prefix + "ffn.b1", 4 * d);
    lp.ffn_w2 = linear(prefix + "ffn.w2", 4 * d, d);
    lp.ffn_b2 = bias(prefix + "ffn.b2", d);
    lp.ln2_gain = &params_.create(prefix + "ln2.g", Tensor::full({d}, 1.0));
    lp.ln2_bias = bias(prefix + "ln2.b", d);
  }

  for (long l = 0; l < cfg_.layers; ++l) {
    const std::string prefix = "skip" + std::to_string(l) + ".";
    skip_params_.emplace_back(linear(prefix + "w", d, cfg_.d_sk), bias(prefix + "b", cfg_.d_sk));
  }
  time_w_ = linear("out.time.w", cfg_.input_steps, cfg_.output_steps);
  time_b_ = bias("out.time.b", cfg_.output_steps);
  out_w_ = linear("out.proj.w", cfg_.d_sk, cfg_.channels);
  out_b_ = bias("out.proj.b", cfg_.channels);
}

Tensor Model::normalized_input(const Sample& sample) const {
  if (sample.input_raw.shape() !=
      std::vector<long>{cfg_.input_steps, cfg_.nodes, cfg_.channels}) {
    throw ConfigError("Model: sample input " + sample.input_raw.shape_str() +
                      " does not match config (T,N,C)");
  }
  Tensor norm(sample.input_raw.shape());
  const long c = cfg_.channels;
  for (long flat = 0; flat < norm.size(); ++flat) {
    if (sample.input_missing[static_cast<size_t>(flat)]) {
      norm[flat] = 0.0;  // channel mean in normalized space
    } else {
      norm[flat] = artifacts_.scaler.normalize(sample.input_raw[flat], flat % c);
    }
  }
  return norm;
}

ad::Value Model::forward(const Sample& sample, std::mt19937_64* dropout_rng,
                         AttentionCapture* capture) {
  const Tensor window_norm = normalized_input(sample);
  std::vector<std::vector<Tensor>> histories;
  if (cfg_.delay_enabled && cfg_.h_geo > 0) {
    histories = delay_histories(sample.input_raw, cfg_.pattern_window);
  }
  const Tensor& mask_geo = cfg_.masks_enabled ? artifacts_.mask_geo : all_ones_mask_;
  const Tensor& mask_sem = cfg_.masks_enabled ? artifacts_.mask_sem : all_ones_mask_;

  using ad::Value;
  Value x = embed(window_norm, sample.meta, artifacts_.basis, tables_, position_encoding_);

  Value skip_sum;
  const HeadConfig head_cfg = cfg_.heads();
  for (long l = 0; l < cfg_.layers; ++l) {
    x = encoder_layer(x, layer_params_[static_cast<size_t>(l)], head_cfg, mask_geo, mask_sem,
                      artifacts_.patterns.centroids, histories, l, cfg_.dropout, dropout_rng,
                      capture);
    Value skip = ad::add_bias(ad::matmul(x, ad::leaf(*skip_params_[static_cast<size_t>(l)].first)),
                              ad::leaf(*skip_params_[static_cast<size_t>(l)].second));
    skip_sum = skip_sum ? ad::add(skip_sum, skip) : skip;
  }

  // Output head: 1x1 convolution over the time axis (T -> T'), a smooth
  // nonlinearity, then a 1x1 convolution over features (d_sk -> C).
  const long t = cfg_.input_steps, n = cfg_.nodes;
  Value flat = ad::reshape(skip_sum, {t, n * cfg_.d_sk});
  Value by_time = ad::transpose_last2(flat);  // (N*d_sk, T)
  Value projected = ad::add_bias(ad::matmul(by_time, ad::leaf(*time_w_)), ad::leaf(*time_b_));
  Value activated = ad::gelu(projected);
  Value back = ad::reshape(ad::transpose_last2(activated), {cfg_.output_steps, n, cfg_.d_sk});
  return ad::add_bias(ad::matmul(back, ad::leaf(*out_w_)), ad::leaf(*out_b_));
}

ad::Value Model::forward_denormalized(const Sample& sample, std::mt19937_64* dropout_rng,
                                      AttentionCapture* capture) {
  if (artifacts_.scaler.mean.empty()) {
    throw ConfigError("Model: no scaler available for denormalized prediction");
  }
  Tensor scale_c({cfg_.channels}), shift_c({cfg_.channels});
  for (long c = 0; c < cfg_.channels; ++c) {
    scale_c[c] = artifacts_.scaler.stddev[static_cast<size_t>(c)];
    shift_c[c] = artifacts_.scaler.mean[static_cast<size_t>(c)];
  }
  return ad::channel_affine(forward(sample, dropout_rng, capture), scale_c, shift_c);
}

Tensor Model::predict_denormalized(const Sample& sample) {
  return forward_denormalized(sample)->val;
}

long Model::expected_parameter_count(const ModelConfig& cfg) {
  const long d = cfg.d;
  const long dp = cfg.heads().d_prime();
  long count = cfg.channels * d + d;       // data projection
  count += cfg.laplacian_k * d + d;        // laplacian projection
  count += 7 * d + cfg.slots_per_day() * d;  // periodic tables
  const long heads = cfg.h_geo + cfg.h_sem + cfg.h_t;
  long per_layer = heads * 3 * d * dp;  // per-head QKV
  if (cfg.delay_enabled && cfg.h_geo > 0) per_layer += 3 * cfg.pattern_window * dp;
  per_layer += d * d;          // output projection
  per_layer += 2 * d;          // ln1
  per_layer += d * 4 * d + 4 * d + 4 * d * d + d;  // ffn
  per_layer += 2 * d;          // ln2
  count += cfg.layers * per_layer;
  count += cfg.layers * (d * cfg.d_sk + cfg.d_sk);                  // skips
  count += cfg.input_steps * cfg.output_steps + cfg.output_steps;   // time conv
  count += cfg.d_sk * cfg.channels + cfg.channels;                  // feature conv
  return count;
}

}  // namespace flowcast
