#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "flowcast/encoder.hpp"
#include "flowcast/errors.hpp"
#include "flowcast/kshape.hpp"
#include "support/test_util.hpp"

using namespace flowcast;
using flowcast::testing::random_tensor;

namespace {

struct LayerFixture {
  ParamStore store;
  EncoderLayerParams params;
  HeadConfig cfg;
  long S;

  LayerFixture(HeadConfig config, long pattern_window, unsigned long seed, bool delay,
               bool zero_weights = false)
      : cfg(config), S(pattern_window) {
    std::mt19937_64 rng(seed);
    const long d = cfg.d, dp = cfg.d_prime();
    auto param = [&](const std::string& name, std::vector<long> shape) {
      return &store.create(name, zero_weights ? Tensor(shape) : random_tensor(shape, rng));
    };
    auto heads = [&](const char* kind, long count) {
      std::vector<HeadParams> out;
      for (long h = 0; h < count; ++h) {
        const std::string base = std::string(kind) + std::to_string(h);
        out.push_back(HeadParams{param(base + ".wq", {d, dp}), param(base + ".wk", {d, dp}),
                                 param(base + ".wv", {d, dp})});
      }
      return out;
    };
    params.geo = heads("geo", cfg.h_geo);
    params.sem = heads("sem", cfg.h_sem);
    params.temporal = heads("tem", cfg.h_t);
    if (delay && cfg.h_geo > 0) {
      params.delay_wu = param("delay.wu", {S, dp});
      params.delay_wm = param("delay.wm", {S, dp});
      params.delay_wc = param("delay.wc", {S, dp});
    }
    params.wo = param("wo", {d, d});
    params.ln1_gain = &store.create("ln1.g", Tensor::full({d}, 1.0));
    params.ln1_bias = param("ln1.b", {d});
    params.ffn_w1 = param("ffn.w1", {d, 4 * d});
    params.ffn_b1 = param("ffn.b1", {4 * d});
    params.ffn_w2 = param("ffn.w2", {4 * d, d});
    params.ffn_b2 = param("ffn.b2", {d});
    params.ln2_gain = &store.create("ln2.g", Tensor::full({d}, 1.0));
    params.ln2_bias = param("ln2.b", {d});
  }
};

}  // namespace

TEST_CASE("head config dimension rule") {
  HeadConfig cfg{2, 1, 1, 16};
  CHECK(cfg.d_prime() == 4);
  CHECK(cfg.d_prime() * cfg.total() == cfg.d);
  CHECK_THROWS_AS((HeadConfig{2, 1, 1, 15}.validate()), ConfigError);
  CHECK_THROWS_AS((HeadConfig{0, 0, 0, 8}.validate()), ConfigError);
}

TEST_CASE("delay_histories edge padding") {
  Tensor window({4, 2, 1});
  for (long t = 0; t < 4; ++t)
    for (long n = 0; n < 2; ++n) window.at(t, n, 0) = static_cast<double>(10 * (t + 1) + n);
  auto hist = delay_histories(window, 3);
  REQUIRE(hist.size() == 4);
  // Slice 0: everything pads back to the first value, z-norm gives zeros.
  for (long n = 0; n < 2; ++n)
    for (long j = 0; j < 3; ++j) CHECK(hist[0][0].at(n, j) == 0.0);
  // Slice 2 covers raw steps {0,1,2}: z-normalized ramp.
  CHECK(hist[2][0].at(0, 0) == doctest::Approx(-1.224744871).epsilon(1e-9));
  CHECK(hist[2][0].at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(hist[2][0].at(0, 2) == doctest::Approx(1.224744871).epsilon(1e-9));
  // Slice 1 covers {pad(0), 0, 1}.
  CHECK(hist[1][0].at(0, 0) == hist[1][0].at(0, 1));
}

TEST_CASE("delay_transform") {
  const long S = 3, dp = 2, N = 2, Np = 4;
  std::mt19937_64 rng(3);
  Tensor patterns = random_tensor({Np, S}, rng);
  std::vector<Tensor> hist = {random_tensor({N, S}, rng)};

  SUBCASE("zero projection gives the uniform pattern average") {
    ParamStore store;
    Parameter& wu = store.create("wu", Tensor({S, dp}));
    Parameter& wm = store.create("wm", random_tensor({S, dp}, rng));
    Parameter& wc = store.create("wc", random_tensor({S, dp}, rng));
    auto r = delay_transform(hist, patterns, wu, wm, wc);
    for (long n = 0; n < N; ++n) {
      for (long j = 0; j < dp; ++j) {
        double mean = 0.0;
        for (long p = 0; p < Np; ++p) {
          double pv = 0.0;
          for (long s = 0; s < S; ++s) pv += patterns.at(p, s) * wc.value.at(s, j);
          mean += pv;
        }
        mean /= static_cast<double>(Np);
        CHECK(r->val.at(n, j) == doctest::Approx(mean).epsilon(1e-12));
      }
    }
  }
  SUBCASE("single pattern collapses to its value row") {
    ParamStore store;
    Parameter& wu = store.create("wu", random_tensor({S, dp}, rng));
    Parameter& wm = store.create("wm", random_tensor({S, dp}, rng));
    Parameter& wc = store.create("wc", random_tensor({S, dp}, rng));
    Tensor single = random_tensor({1, S}, rng);
    auto r = delay_transform(hist, single, wu, wm, wc);
    for (long n = 0; n < N; ++n) {
      for (long j = 0; j < dp; ++j) {
        double pv = 0.0;
        for (long s = 0; s < S; ++s) pv += single.at(0, s) * wc.value.at(s, j);
        CHECK(r->val.at(n, j) == doctest::Approx(pv).epsilon(1e-12));
      }
    }
  }
  SUBCASE("saturated weights select one pattern") {
    // Hand-set logits around +-20 by construction: u = (1,0), keys (20,0)/(-20,0).
    ParamStore store;
    Parameter& wu = store.create("wu", Tensor::from_data({2, 2}, {1, 0, 0, 0}));
    Parameter& wm = store.create("wm", Tensor::from_data({2, 2}, {20, 0, 0, 0}));
    Parameter& wc = store.create("wc", random_tensor({2, 2}, rng));
    Tensor two = Tensor::from_data({2, 2}, {1, 0, -1, 0});  // p0=(1,0), p1=(-1,0)
    // One-node history z-normalizing to exactly (1,-1)/std -> u row (1.0, 0).
    std::vector<Tensor> h2 = {Tensor::from_data({1, 2}, {5.0, 3.0})};  // z-norm -> (1,-1)
    auto r = delay_transform(h2, two, wu, wm, wc);
    // logits = ((1)(20), (1)(-20)) so weights ~ (1, 4e-18).
    for (long j = 0; j < 2; ++j) {
      const double p0 = two.at(0, 0) * wc.value.at(0, j) + two.at(0, 1) * wc.value.at(1, j);
      CHECK(std::fabs(r->val.at(0, j) - p0) < 1e-15 + 1e-15 * std::fabs(p0) + 1e-12);
    }
  }
  SUBCASE("window mismatch is rejected") {
    ParamStore store;
    Parameter& wu = store.create("wu", random_tensor({S + 1, dp}, rng));
    Parameter& wm = store.create("wm", random_tensor({S + 1, dp}, rng));
    Parameter& wc = store.create("wc", random_tensor({S + 1, dp}, rng));
    CHECK_THROWS_AS(delay_transform(hist, patterns, wu, wm, wc), std::invalid_argument);
  }
}

TEST_CASE("spatial scores match a triple-loop oracle") {
  std::mt19937_64 rng(14);
  const long N = 3, d = 6, dp = 2;
  Tensor x = random_tensor({N, d}, rng);
  Tensor wq = random_tensor({d, dp}, rng), wk = random_tensor({d, dp}, rng);
  auto scores = ad::scale(
      ad::matmul(ad::matmul(ad::constant(x), ad::constant(wq)),
                 ad::transpose_last2(ad::matmul(ad::constant(x), ad::constant(wk)))),
      1.0 / std::sqrt(static_cast<double>(dp)));
  for (long i = 0; i < N; ++i) {
    for (long j = 0; j < N; ++j) {
      double acc = 0.0;
      for (long a = 0; a < dp; ++a) {
        double qi = 0.0, kj = 0.0;
        for (long b = 0; b < d; ++b) {
          qi += x.at(i, b) * wq.at(b, a);
          kj += x.at(j, b) * wk.at(b, a);
        }
        acc += qi * kj;
      }
      acc /= std::sqrt(static_cast<double>(dp));
      CHECK(scores->val.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }
  }

  SUBCASE("zero input gives zero scores; single node gives a scalar") {
    auto zero = ad::matmul(ad::constant(Tensor({N, d})), ad::constant(wq));
    for (long i = 0; i < zero->val.size(); ++i) CHECK(zero->val[i] == 0.0);
  }
}

TEST_CASE("encoder_layer") {
  const long T = 3, N = 4, Np = 3, S = 3;
  std::mt19937_64 rng(15);

  auto run = [&](LayerFixture& fx, const Tensor& x, const Tensor& m_geo, const Tensor& m_sem,
                 const Tensor& patterns, const std::vector<std::vector<Tensor>>& hist,
                 AttentionCapture* cap) {
    return encoder_layer(ad::constant(x), fx.params, fx.cfg, m_geo, m_sem, patterns, hist, 0,
                         0.0, nullptr, cap);
  };

  SUBCASE("identity masks collapse spatial attention to self-attention only") {
    HeadConfig cfg{1, 1, 0, 8};
    LayerFixture fx(cfg, S, 21, false);
    Tensor x = random_tensor({T, N, cfg.d}, rng);
    Tensor eye({N, N});
    for (long i = 0; i < N; ++i) eye.at(i, i) = 1.0;
    AttentionCapture cap;
    run(fx, x, eye, eye, Tensor({Np, S}), {}, &cap);
    REQUIRE(cap.size() == static_cast<size_t>(2 * T));
    for (const auto& entry : cap) {
      for (long i = 0; i < N; ++i)
        for (long j = 0; j < N; ++j) CHECK(entry.matrix.at(i, j) == (i == j ? 1.0 : 0.0));
    }
  }

  SUBCASE("single time step makes temporal attention trivial") {
    HeadConfig cfg{0, 0, 2, 8};
    LayerFixture fx(cfg, S, 22, false);
    Tensor x = random_tensor({1, N, cfg.d}, rng);
    AttentionCapture cap;
    run(fx, x, Tensor({N, N}), Tensor({N, N}), Tensor({Np, S}), {}, &cap);
    REQUIRE(cap.size() == static_cast<size_t>(2 * N));
    for (const auto& entry : cap) {
      CHECK(entry.matrix.size() == 1);
      CHECK(entry.matrix[0] == 1.0);
    }
  }

  SUBCASE("captured attention is row-stochastic with zeros under the mask") {
    HeadConfig cfg{2, 1, 1, 8};
    LayerFixture fx(cfg, S, 23, true);
    Tensor x = random_tensor({T, N, cfg.d}, rng);
    Tensor m_geo = flowcast::testing::random_keep_mask(N, rng);
    Tensor m_sem = flowcast::testing::random_keep_mask(N, rng);
    Tensor patterns = random_tensor({Np, S}, rng);
    Tensor raw = random_tensor({T, N, 1}, rng, 0.0, 10.0);
    auto hist = delay_histories(raw, S);
    AttentionCapture cap;
    run(fx, x, m_geo, m_sem, patterns, hist, &cap);
    REQUIRE(cap.size() == static_cast<size_t>(3 * T + N));
    for (const auto& entry : cap) {
      const Tensor* mask = entry.head_kind == "geo"   ? &m_geo
                           : entry.head_kind == "sem" ? &m_sem
                                                      : nullptr;
      for (long i = 0; i < entry.matrix.dim(0); ++i) {
        double sum = 0.0;
        for (long j = 0; j < entry.matrix.dim(1); ++j) {
          sum += entry.matrix.at(i, j);
          if (mask && mask->at(i, j) == 0.0) CHECK(entry.matrix.at(i, j) == 0.0);
        }
        CHECK(std::fabs(sum - 1.0) < 1e-6);
      }
    }
  }

  SUBCASE("spatial attention differs across time slices on random input") {
    HeadConfig cfg{1, 0, 0, 8};
    LayerFixture fx(cfg, S, 24, false);
    Tensor x = random_tensor({T, N, cfg.d}, rng);
    Tensor ones = Tensor::full({N, N}, 1.0);
    AttentionCapture cap;
    run(fx, x, ones, ones, Tensor({Np, S}), {}, &cap);
    bool any_differ = false;
    for (long i = 0; i < N * N; ++i) {
      if (std::fabs(cap[0].matrix[i] - cap[1].matrix[i]) > 1e-12) any_differ = true;
    }
    CHECK(any_differ);
  }

  SUBCASE("permutation equivariance under node relabeling") {
    HeadConfig cfg{1, 1, 1, 6};
    LayerFixture fx(cfg, S, 25, true);
    Tensor x = random_tensor({T, N, cfg.d}, rng);
    Tensor m_geo = flowcast::testing::random_keep_mask(N, rng);
    Tensor m_sem = flowcast::testing::random_keep_mask(N, rng);
    Tensor patterns = random_tensor({Np, S}, rng);
    Tensor raw = random_tensor({T, N, 1}, rng, 0.0, 10.0);
    auto hist = delay_histories(raw, S);
    auto out = run(fx, x, m_geo, m_sem, patterns, hist, nullptr);

    std::vector<long> perm(static_cast<size_t>(N));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor xp({T, N, cfg.d});
    Tensor gp({N, N}), sp({N, N});
    Tensor rawp({T, N, 1});
    for (long i = 0; i < N; ++i) {
      for (long j = 0; j < N; ++j) {
        gp.at(i, j) = m_geo.at(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
        sp.at(i, j) = m_sem.at(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
      }
      for (long t = 0; t < T; ++t) {
        rawp.at(t, i, 0) = raw.at(t, perm[static_cast<size_t>(i)], 0);
        for (long jd = 0; jd < cfg.d; ++jd) xp.at(t, i, jd) = x.at(t, perm[static_cast<size_t>(i)], jd);
      }
    }
    auto histp = delay_histories(rawp, S);
    auto outp = run(fx, xp, gp, sp, patterns, histp, nullptr);
    for (long t = 0; t < T; ++t)
      for (long i = 0; i < N; ++i)
        for (long jd = 0; jd < cfg.d; ++jd) {
          CHECK(outp->val.at(t, i, jd) ==
                doctest::Approx(out->val.at(t, perm[static_cast<size_t>(i)], jd)).epsilon(1e-11));
        }
  }

  SUBCASE("delay perturbations respect the geographic mask") {
    HeadConfig cfg{2, 0, 0, 8};
    LayerFixture fx(cfg, S, 26, true);
    Tensor x = random_tensor({T, N, cfg.d}, rng);
    // Ring-like mask: node i sees i-1, i, i+1.
    Tensor m_geo({N, N});
    for (long i = 0; i < N; ++i) {
      m_geo.at(i, i) = 1.0;
      m_geo.at(i, (i + 1) % N) = 1.0;
      m_geo.at(i, (i + N - 1) % N) = 1.0;
    }
    Tensor patterns = random_tensor({Np, S}, rng);
    Tensor raw = random_tensor({T, N, 1}, rng, 0.0, 10.0);
    auto base = run(fx, x, m_geo, m_geo, patterns, delay_histories(raw, S), nullptr);

    const long j = 2;
    Tensor poked = raw;
    for (long t = 0; t < T; ++t) poked.at(t, j, 0) += 3.0 + static_cast<double>(t);
    auto moved = run(fx, x, m_geo, m_geo, patterns, delay_histories(poked, S), nullptr);
    for (long i = 0; i < N; ++i) {
      double diff = 0.0;
      for (long t = 0; t < T; ++t)
        for (long jd = 0; jd < cfg.d; ++jd)
          diff = std::max(diff, std::fabs(moved->val.at(t, i, jd) - base->val.at(t, i, jd)));
      if (m_geo.at(i, j) == 1.0) {
        CHECK(diff > 0.0);
      } else {
        CHECK(diff == 0.0);
      }
    }
  }

  SUBCASE("fully masked row is rejected") {
    HeadConfig cfg{1, 0, 0, 4};
    LayerFixture fx(cfg, S, 27, false);
    Tensor x = random_tensor({1, N, cfg.d}, rng);
    Tensor bad({N, N});  // all zeros
    CHECK_THROWS_AS(run(fx, x, bad, bad, Tensor({Np, S}), {}, nullptr), NumericError);
  }

  SUBCASE("gradients through the whole layer match finite differences") {
    HeadConfig cfg{1, 1, 1, 6};
    LayerFixture fx(cfg, S, 28, true);
    Tensor x = random_tensor({2, 3, cfg.d}, rng);
    Tensor m = flowcast::testing::random_keep_mask(3, rng);
    Tensor patterns = random_tensor({Np, S}, rng);
    Tensor raw = random_tensor({2, 3, 1}, rng, 0.0, 10.0);
    auto hist = delay_histories(raw, S);
    auto build = [&]() {
      return ad::sum_all(encoder_layer(ad::constant(x), fx.params, fx.cfg, m, m, patterns, hist,
                                       0, 0.0, nullptr, nullptr));
    };
    CHECK(flowcast::testing::check_gradients(fx.store, build) < 1e-4);
  }
}
