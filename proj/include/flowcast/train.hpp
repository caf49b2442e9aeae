#pragma once

#include <vector>

#include "flowcast/data.hpp"
#include "flowcast/model.hpp"
#include "flowcast/params.hpp"

namespace flowcast {

enum class LossKind { MaskedMae, MaskedHuber };

struct TrainConfig {
  double lr = 0.001;
  long batch_size = 16;
  long max_epochs = 200;
  long patience = 20;
  unsigned long seed = 1;
  double grad_clip_norm = 5.0;
  LossKind loss_kind = LossKind::MaskedMae;
  double huber_delta = 1.0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  long max_steps = 0;  // 0 = bounded by epochs only
  bool shuffle = true;

  void validate() const;
};

struct EpochStats {
  long epoch = 0;
  double train_loss = 0.0;
  double val_mae = 0.0;
  double val_rmse = 0.0;
  double val_mape = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  long best_epoch = -1;
  double best_val_mae = 0.0;
  long steps_taken = 0;
  bool diverged = false;
};

/// Masked loss in flow units over one batch; gradients accumulate into the
/// model parameters when requested.
double batch_loss(Model& model, const std::vector<const Sample*>& batch, const TrainConfig& cfg,
                  std::mt19937_64* dropout_rng, bool accumulate_grads);

/// Validation metrics exactly as the persisted checkpoint would score:
/// computed with parameters rounded to 32-bit storage precision.
EpochStats validate_epoch(Model& model, const std::vector<Sample>& val_samples);

/// Full loop: per-epoch shuffled batches, AdamW with gradient clipping,
/// best-validation tracking with early stopping. Leaves the model holding
/// the best parameters; on a NaN loss the last good parameters are kept
/// and `diverged` is set.
TrainResult train(Model& model, const SampleSplit& split, const TrainConfig& cfg);

}  // namespace flowcast
