#include <doctest.h>

#include <cmath>
#include <random>

#include "flowcast/errors.hpp"
#include "flowcast/train.hpp"
#include "support/test_util.hpp"

using namespace flowcast;

namespace {

// Small ring dataset and a matching split, shared across training tests.
struct TrainFixture {
  ModelConfig cfg;
  PreprocessArtifacts artifacts;
  SampleSplit splits;

  explicit TrainFixture(unsigned long seed, long nodes = 4, long days = 1) {
    auto [tensor, net] = generate_synthetic(nodes, days, 60, 1, 0.2, seed);
    cfg.nodes = nodes;
    cfg.channels = 1;
    cfg.input_steps = 4;
    cfg.output_steps = 2;
    cfg.d = 8;
    cfg.d_sk = 8;
    cfg.layers = 1;
    cfg.h_geo = 1;
    cfg.h_sem = 1;
    cfg.h_t = 2;
    cfg.sem_neighbors = 1;
    cfg.n_patterns = 2;
    cfg.pattern_window = 3;
    cfg.laplacian_k = 2;
    cfg.interval_minutes = 60;
    cfg.seed = seed;

    std::mt19937_64 rng(seed + 17);
    artifacts.mask_geo = flowcast::testing::random_keep_mask(nodes, rng, 0.6);
    artifacts.mask_sem = flowcast::testing::random_keep_mask(nodes, rng, 0.4);
    artifacts.basis = flowcast::testing::random_tensor({nodes, cfg.laplacian_k}, rng);
    artifacts.patterns.window = cfg.pattern_window;
    artifacts.patterns.centroids =
        flowcast::testing::random_tensor({cfg.n_patterns, cfg.pattern_window}, rng);
    artifacts.scaler = fit_scaler(tensor, tensor.steps());
    splits = split_samples(make_samples(tensor, cfg.input_steps, cfg.output_steps),
                           {0.6, 0.2, 0.2});
  }
};

}  // namespace

TEST_CASE("zero learning rate leaves parameters untouched for a full epoch") {
  TrainFixture fx(1);
  Model model(fx.cfg, fx.artifacts);
  const auto before = model.params().snapshot_values();
  TrainConfig tc;
  tc.lr = 0.0;
  tc.max_epochs = 1;
  tc.batch_size = 8;
  auto result = train(model, fx.splits, tc);
  CHECK(result.history.size() == 1);
  const auto after = model.params().snapshot_values();
  for (size_t i = 0; i < before.size(); ++i) CHECK(before[i].values() == after[i].values());
}

TEST_CASE("identical seeds give bit-identical loss curves") {
  TrainFixture fx(2);
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.batch_size = 4;
  tc.seed = 77;

  Model m1(fx.cfg, fx.artifacts);
  auto r1 = train(m1, fx.splits, tc);
  Model m2(fx.cfg, fx.artifacts);
  auto r2 = train(m2, fx.splits, tc);
  REQUIRE(r1.history.size() == r2.history.size());
  for (size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
    CHECK(r1.history[i].val_mae == r2.history[i].val_mae);
  }
  const auto v1 = m1.params().snapshot_values();
  const auto v2 = m2.params().snapshot_values();
  for (size_t i = 0; i < v1.size(); ++i) CHECK(v1[i].values() == v2[i].values());
}

TEST_CASE("first optimizer step does not increase the batch loss") {
  for (unsigned long seed = 1; seed <= 10; ++seed) {
    TrainFixture fx(seed);
    Model model(fx.cfg, fx.artifacts);
    std::vector<const Sample*> batch;
    for (size_t i = 0; i < std::min<size_t>(4, fx.splits.train.size()); ++i) {
      batch.push_back(&fx.splits.train[i]);
    }
    TrainConfig tc;
    tc.lr = 1e-4;
    model.params().zero_grads();
    const double before = batch_loss(model, batch, tc, nullptr, true);
    AdamWConfig adam;
    adam.lr = 1e-4;
    adam.weight_decay = tc.weight_decay;
    clip_global_norm(model.params(), tc.grad_clip_norm);
    adamw_step(model.params(), adam, 1);
    const double after = batch_loss(model, batch, tc, nullptr, false);
    CHECK(after <= before + 1e-12);
  }
}

TEST_CASE("best checkpoint equals the history minimum") {
  TrainFixture fx(3);
  Model model(fx.cfg, fx.artifacts);
  TrainConfig tc;
  tc.max_epochs = 5;
  tc.batch_size = 8;
  auto result = train(model, fx.splits, tc);
  REQUIRE(result.best_epoch >= 1);
  double min_mae = result.history[0].val_mae;
  for (const auto& e : result.history) min_mae = std::min(min_mae, e.val_mae);
  CHECK(result.best_val_mae == min_mae);
  // The model holds the best parameters, so re-validating reproduces it.
  EpochStats again = validate_epoch(model, fx.splits.val);
  CHECK(again.val_mae == doctest::Approx(result.best_val_mae).epsilon(1e-12));
}

TEST_CASE("NaN loss aborts with the last good parameters") {
  TrainFixture fx(4);
  Model model(fx.cfg, fx.artifacts);
  model.params().at("out.proj.b").value[0] = std::numeric_limits<double>::quiet_NaN();
  const auto at_start = model.params().snapshot_values();
  TrainConfig tc;
  tc.max_epochs = 2;
  auto result = train(model, fx.splits, tc);
  CHECK(result.diverged);
  CHECK(result.history.empty());
  // No epoch completed, so training rolls back to its starting state; the
  // first parameter tensor is clean and must be untouched.
  const auto restored = model.params().snapshot_values();
  CHECK(restored[0].values() == at_start[0].values());
}

TEST_CASE("max_steps caps optimization mid-epoch") {
  TrainFixture fx(5);
  Model model(fx.cfg, fx.artifacts);
  TrainConfig tc;
  tc.max_epochs = 50;
  tc.batch_size = 2;
  tc.max_steps = 3;
  auto result = train(model, fx.splits, tc);
  CHECK(result.steps_taken == 3);
  CHECK(result.history.size() == 1);  // the partial epoch is still validated
  CHECK(result.best_epoch == 1);
}

TEST_CASE("all-missing batch is rejected") {
  TrainFixture fx(6);
  Model model(fx.cfg, fx.artifacts);
  Sample broken = fx.splits.train[0];
  std::fill(broken.target_missing.begin(), broken.target_missing.end(), 1);
  std::vector<const Sample*> batch = {&broken};
  TrainConfig tc;
  CHECK_THROWS_AS(batch_loss(model, batch, tc, nullptr, false), DataError);
}
