#include "flowcast/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "flowcast/autodiff.hpp"
#include "flowcast/errors.hpp"
#include "flowcast/metrics.hpp"

namespace flowcast {

void TrainConfig::validate() const {
  if (lr < 0.0) throw ConfigError("TrainConfig: lr must be >= 0");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (max_epochs < 0 || patience < 1) {
    throw ConfigError("TrainConfig: max_epochs must be >= 0 and patience >= 1");
  }
  if (huber_delta <= 0.0) throw ConfigError("TrainConfig: huber_delta must be positive");
}

double batch_loss(Model& model, const std::vector<const Sample*>& batch, const TrainConfig& cfg,
                  std::mt19937_64* dropout_rng, bool accumulate_grads) {
  if (batch.empty()) throw DataError("batch_loss: empty batch");
  std::vector<ad::Value> sums;
  sums.reserve(batch.size());
  double total = 0.0;
  double weight_count = 0.0;
  for (const Sample* sample : batch) {
    ad::Value pred = model.forward_denormalized(*sample, dropout_rng);
    Tensor weight(pred->val.shape());
    for (long i = 0; i < weight.size(); ++i) {
      weight[i] = sample->target_missing[static_cast<size_t>(i)] ? 0.0 : 1.0;
      weight_count += weight[i];
    }
    ad::Value s = cfg.loss_kind == LossKind::MaskedMae
                      ? ad::masked_abs_sum(pred, sample->target_raw, weight)
                      : ad::masked_huber_sum(pred, sample->target_raw, weight, cfg.huber_delta);
    total += s->val[0];
    sums.push_back(std::move(s));
  }
  if (weight_count <= 0.0) throw DataError("batch_loss: batch has no observed targets");
  if (accumulate_grads) {
    for (auto& s : sums) ad::backward(s, 1.0 / weight_count);
  }
  return total / weight_count;
}

namespace {

void round_params_to_storage(ParamStore& params) {
  for (auto& p : params.all()) {
    for (long i = 0; i < p->value.size(); ++i) {
      p->value[i] = static_cast<double>(static_cast<float>(p->value[i]));
    }
  }
}

}  // namespace

EpochStats validate_epoch(Model& model, const std::vector<Sample>& val_samples) {
  if (val_samples.empty()) throw DataError("validate_epoch: empty validation split");
  // Score with parameters as the checkpoint stores them, so history
  // metrics match a later evaluation of the saved file exactly.
  const auto exact = model.params().snapshot_values();
  round_params_to_storage(model.params());
  EvalAccumulator acc;
  for (const Sample& sample : val_samples) {
    acc.add(model.predict_denormalized(sample), sample.target_raw, sample.target_missing);
  }
  model.params().restore_values(exact);
  const EvalReport report = acc.finalize();
  EpochStats stats;
  stats.val_mae = report.overall.mae;
  stats.val_rmse = report.overall.rmse;
  stats.val_mape = report.overall.mape_percent;
  return stats;
}

TrainResult train(Model& model, const SampleSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.empty() || split.val.empty()) {
    throw DataError("train: training and validation splits must be non-empty");
  }

  AdamWConfig adam;
  adam.lr = cfg.lr;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.eps = cfg.adam_eps;
  adam.weight_decay = cfg.weight_decay;

  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x517cc1b727220a95ULL);

  std::vector<long> indices(split.train.size());
  std::iota(indices.begin(), indices.end(), 0);

  TrainResult result;
  auto best_values = model.params().snapshot_values();
  long bad_epochs = 0;
  bool stop = false;

  for (long epoch = 1; epoch <= cfg.max_epochs && !stop; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.shuffle) std::shuffle(indices.begin(), indices.end(), shuffle_rng);

    double loss_sum = 0.0;
    long batches = 0;
    for (size_t start = 0; start < indices.size(); start += static_cast<size_t>(cfg.batch_size)) {
      std::vector<const Sample*> batch;
      for (size_t i = start; i < std::min(indices.size(), start + static_cast<size_t>(cfg.batch_size)); ++i) {
        batch.push_back(&split.train[static_cast<size_t>(indices[i])]);
      }
      model.params().zero_grads();
      const double loss = batch_loss(model, batch, cfg, &dropout_rng, true);
      if (!std::isfinite(loss)) {
        model.params().restore_values(best_values);
        result.diverged = true;
        stop = true;
        break;
      }
      clip_global_norm(model.params(), cfg.grad_clip_norm);
      adamw_step(model.params(), adam, ++result.steps_taken);
      loss_sum += loss;
      ++batches;
      if (cfg.max_steps > 0 && result.steps_taken >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
    if (result.diverged) break;

    EpochStats stats = validate_epoch(model, split.val);
    stats.epoch = epoch;
    stats.train_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
    stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(stats);

    if (result.best_epoch < 0 || stats.val_mae < result.best_val_mae) {
      result.best_epoch = epoch;
      result.best_val_mae = stats.val_mae;
      best_values = model.params().snapshot_values();
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= cfg.patience) stop = true;
    }
  }

  model.params().restore_values(best_values);
  return result;
}

}  // namespace flowcast
