#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"

using namespace snnssl;

TEST(StdpDelta, ClosedFormValues) {
  const StdpConfig cfg;
  EXPECT_NEAR(stdp_delta(-1, cfg), 0.52950, 1e-5);
  EXPECT_NEAR(stdp_delta(1, cfg), -0.24562, 1e-5);
  for (int ds = 1; ds <= 20; ++ds) {
    EXPECT_DOUBLE_EQ(stdp_delta(-ds, cfg), 0.6 * std::exp(-ds / 8.0));
    EXPECT_DOUBLE_EQ(stdp_delta(ds, cfg), -0.3 * std::exp(-ds / 5.0));
  }
}

TEST(StdpDelta, WindowAndDeadZone) {
  const StdpConfig cfg;
  for (int ds : {0, 21, -21, 25, -25, 100, -100}) EXPECT_EQ(stdp_delta(ds, cfg), 0.0) << ds;
  for (int ds = 1; ds <= 20; ++ds) {
    EXPECT_GT(stdp_delta(-ds, cfg), 0.0);
    EXPECT_LT(stdp_delta(ds, cfg), 0.0);
  }
}

TEST(StdpDelta, MagnitudeFallsWithDistance) {
  const StdpConfig cfg;
  for (int ds = 1; ds < 20; ++ds) {
    EXPECT_GT(std::abs(stdp_delta(-ds, cfg)), std::abs(stdp_delta(-ds - 1, cfg)));
    EXPECT_GT(std::abs(stdp_delta(ds, cfg)), std::abs(stdp_delta(ds + 1, cfg)));
  }
}

TEST(StdpDelta, WiderDeadZone) {
  StdpConfig cfg;
  cfg.dead_zone = 3;
  EXPECT_EQ(stdp_delta(2, cfg), 0.0);
  EXPECT_NE(stdp_delta(3, cfg), 0.0);
}

TEST(ApplyStdp, SinglePair) {
  const StdpConfig cfg;
  SpikeRecord pre(2), post(1);
  pre.push(10, 1);
  post.push(11, 0);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(1, 2);
  apply_stdp(pre, post, w, cfg);
  EXPECT_NEAR(w(0, 1), 5.295e-5, 1e-8);
  EXPECT_EQ(w(0, 0), 0.0);
}

TEST(ApplyStdp, OnePreTwoPosts) {
  const StdpConfig cfg;
  SpikeRecord pre(1), post(1);
  pre.push(10, 0);
  post.push(11, 0);
  post.push(12, 0);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(1, 1);
  apply_stdp(pre, post, w, cfg);
  EXPECT_NEAR(w(0, 0), 1e-4 * (0.6 * std::exp(-1.0 / 8) + 0.6 * std::exp(-2.0 / 8)), 1e-18);
}

TEST(ApplyStdp, EmptyRecordsOrZeroRate) {
  StdpConfig cfg;
  Rng rng = make_rng(1);
  const auto busy = oracle::random_record(rng, 5, 50, 0.2);
  Eigen::MatrixXd w = Eigen::MatrixXd::Constant(5, 5, 0.3);
  const auto before = w;
  apply_stdp(SpikeRecord(5), busy, w, cfg);
  apply_stdp(busy, SpikeRecord(5), w, cfg);
  cfg.lr = 0.0;
  apply_stdp(busy, busy, w, cfg);
  EXPECT_EQ(w, before);
}

TEST(ApplyStdp, MatchesBruteForcePairSum) {
  const StdpConfig cfg;
  Rng rng = make_rng(derive_seed(2, "stdp-brute"));
  for (int t = 0; t < 30; ++t) {
    const auto pre = oracle::random_record(rng, 15, 50, 0.15);
    const auto post = oracle::random_record(rng, 6, 50, 0.08);
    Eigen::MatrixXd w = Eigen::MatrixXd::Constant(6, 15, 0.1);
    apply_stdp(pre, post, w, cfg);
    const Eigen::MatrixXd expect = Eigen::MatrixXd::Constant(6, 15, 0.1) + oracle::brute_stdp_change(pre, post, cfg);
    EXPECT_LT((w - expect).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(ApplyStdp, IndependentOfEventListing) {
  // the same spikes listed in reverse order give the same records and weights
  const StdpConfig cfg;
  Rng rng = make_rng(3);
  const auto pre = oracle::random_record(rng, 10, 40, 0.2);
  const auto post = oracle::random_record(rng, 4, 40, 0.1);
  std::vector<SpikeEvent> rev_pre(pre.events().rbegin(), pre.events().rend());
  std::vector<SpikeEvent> rev_post(post.events().rbegin(), post.events().rend());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 10), b = a;
  apply_stdp(pre, post, a, cfg);
  apply_stdp(SpikeRecord(10, rev_pre), SpikeRecord(4, rev_post), b, cfg);
  EXPECT_EQ(a, b);
}

TEST(ApplyStdp, DimensionMismatch) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 3);
  EXPECT_THROW(apply_stdp(SpikeRecord(4), SpikeRecord(3), w, StdpConfig{}), std::invalid_argument);
}

TEST(StdpConfig, Validation) {
  StdpConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.a_minus = 0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = StdpConfig{};
  cfg.window = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

namespace {

Network small_net() {
  Rng rng = make_rng(derive_seed(4, "stdp-net"));
  Network net;
  net.input_size = 16;
  for (auto [out, in, mu] : {std::tuple{10, 16, -0.4}, std::tuple{3, 10, -1.0}}) {
    auto init = init_layer(out, in, 2.0, rng);
    LayerParams p;
    p.weights = init.weights.cwiseAbs();
    p.thresholds = init.thresholds;
    p.mu = mu;
    net.layers.push_back(p);
  }
  return net;
}

SampleBank small_bank() {
  SampleBank bank;
  for (int s = 0; s < 6; ++s) {
    RateMap r(4, 4);
    for (int i = 0; i < 16; ++i) r.values[static_cast<std::size_t>(i)] = ((i + s) % 4 == 0) ? 150.0 : 30.0;
    bank.rates.push_back(r);
    bank.labels.push_back(-1);
  }
  return bank;
}

}  // namespace

TEST(StdpEpoch, ZeroRateKeepsWeights) {
  auto net = small_net();
  const auto bank = small_bank();
  const auto w0 = net.layers[0].weights, w1 = net.layers[1].weights;
  StdpConfig cfg;
  cfg.lr = 0.0;
  const auto stats = stdp_epoch(net, bank, std::vector<int>{0, 1, 2, 3, 4, 5}, cfg, BpHyperParams{}, 1, 1);
  EXPECT_EQ(net.layers[0].weights, w0);
  EXPECT_EQ(net.layers[1].weights, w1);
  EXPECT_EQ(stats.samples, 6);
}

TEST(StdpEpoch, DeterministicAndTouchesSelectedLayers) {
  auto a = small_net(), b = small_net(), h = small_net();
  const auto bank = small_bank();
  const std::vector<int> idx{0, 1, 2, 3, 4, 5};
  StdpConfig cfg;
  cfg.lr = 0.01;
  stdp_epoch(a, bank, idx, cfg, BpHyperParams{}, 7, 1);
  stdp_epoch(b, bank, idx, cfg, BpHyperParams{}, 7, 1);
  EXPECT_EQ(a.layers[0].weights, b.layers[0].weights);
  EXPECT_EQ(a.layers[1].weights, b.layers[1].weights);
  EXPECT_NE(a.layers[0].weights, small_net().layers[0].weights);

  cfg.layers = StdpLayers::hidden;
  stdp_epoch(h, bank, idx, cfg, BpHyperParams{}, 7, 1);
  EXPECT_EQ(h.layers[1].weights, small_net().layers[1].weights);
}

TEST(StdpEpoch, RegularizesThresholds) {
  auto net = small_net();
  const auto th0 = net.layers[0].thresholds;
  StdpConfig cfg;
  cfg.lr = 0.0;
  stdp_epoch(net, small_bank(), std::vector<int>{0, 1, 2}, cfg, BpHyperParams{}, 1, 1);
  EXPECT_NE(net.layers[0].thresholds, th0);
}
