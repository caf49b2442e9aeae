#pragma once

#include <optional>
#include <random>
#include <vector>

#include "flowcast/data.hpp"
#include "flowcast/embedding.hpp"
#include "flowcast/encoder.hpp"
#include "flowcast/kshape.hpp"
#include "flowcast/params.hpp"

namespace flowcast {

struct ModelConfig {
  long input_steps = 12;   // T
  long output_steps = 12;  // T'
  long nodes = 0;          // N
  long channels = 1;       // C
  long d = 16;
  long d_sk = 64;
  long layers = 2;
  long h_geo = 2;
  long h_sem = 1;
  long h_t = 1;
  long lambda_hops = 2;
  long sem_neighbors = 3;   // K
  long n_patterns = 16;     // N_p
  long pattern_window = 3;  // S
  long laplacian_k = 8;
  long interval_minutes = 5;
  unsigned long seed = 1;
  double dropout = 0.0;
  bool delay_enabled = true;
  bool masks_enabled = true;

  HeadConfig heads() const { return HeadConfig{h_geo, h_sem, h_t, d}; }
  long slots_per_day() const { return 1440 / interval_minutes; }
  void validate() const;
};

/// Frozen preprocessing outputs the model consumes.
struct PreprocessArtifacts {
  Tensor mask_geo;  // N x N
  Tensor mask_sem;  // N x N
  Tensor basis;     // N x laplacian_k
  PatternSet patterns;
  Scaler scaler;
};

/// Embedding + L encoder layers + per-layer skip projections + the
/// two-convolution output head. All T' steps come from one forward pass.
class Model {
 public:
  Model(ModelConfig cfg, PreprocessArtifacts artifacts);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const PreprocessArtifacts& artifacts() const { return artifacts_; }

  /// Normalized input built from a sample: z-scored values with missing
  /// entries imputed to the channel mean.
  Tensor normalized_input(const Sample& sample) const;

  /// Prediction in normalized space, shape (T', N, C).
  ad::Value forward(const Sample& sample, std::mt19937_64* dropout_rng = nullptr,
                    AttentionCapture* capture = nullptr);

  /// Prediction in flow units (inverse z-score applied inside the graph).
  ad::Value forward_denormalized(const Sample& sample, std::mt19937_64* dropout_rng = nullptr,
                                 AttentionCapture* capture = nullptr);

  /// Inference-only convenience; no dropout.
  Tensor predict_denormalized(const Sample& sample);

  /// Parameter count implied by the config (regression contract).
  static long expected_parameter_count(const ModelConfig& cfg);

 private:
  ModelConfig cfg_;
  PreprocessArtifacts artifacts_;
  Tensor all_ones_mask_;
  Tensor position_encoding_;
  ParamStore params_;
  EmbeddingTables tables_;
  std::vector<EncoderLayerParams> layer_params_;
  std::vector<std::pair<Parameter*, Parameter*>> skip_params_;  // (w, b) per layer
  Parameter* time_w_ = nullptr;  // T x T'
  Parameter* time_b_ = nullptr;
  Parameter* out_w_ = nullptr;  // d_sk x C
  Parameter* out_b_ = nullptr;

  void init_parameters();
};

}  // namespace flowcast
