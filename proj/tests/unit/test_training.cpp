#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <vector>

#include "dualsrc/datagen.hpp"
#include "dualsrc/training.hpp"
#include "testkit.hpp"

using namespace dualsrc;
using testkit::flat_world;

namespace {

namespace fs = std::filesystem;

// One product, three weeks, JIT same-week, LLT one week out.
ExoWorld tiny_world() {
  ExoWorld w = flat_world(1, 3, 0, 1, {0.0, 10.0, 6.0, 4.0, 1.0});
  const double d[] = {4, 6, 5};
  for (std::size_t t = 0; t < 3; ++t) w.weeks[0][t].demand = d[t];
  testkit::make_continuous(w);
  return w;
}

TrainConfig small_config() {
  TrainConfig c;
  c.hidden = {6};
  c.batch_size = 3;
  c.train_weeks = 20;
  c.max_batches = 6;
  c.step_size = 1e-2;
  c.deterministic = true;
  c.seed = 11;
  return c;
}

GenSpec small_spec() {
  GenSpec s;
  s.num_products = 5;
  s.horizon = 30;
  s.lead_jit = 1;
  s.lead_llt = 4;
  s.seed = 3;
  return s;
}

WorldSource source_for(const GenSpec& spec) {
  return [spec](std::size_t epoch) {
    GenSpec s = spec;
    s.path_seed = derive_seed(spec.seed, epoch, 99);
    return std::make_shared<const ExoWorld>(generate_world(s));
  };
}

fs::path temp(const std::string& name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST(TrainBuy, ZeroStepLeavesParametersAndObjective) {
  const ExoWorld w = tiny_world();
  TrainConfig c = small_config();
  c.train_weeks = 3;
  c.batch_size = 1;
  c.step_size = 0.0;
  c.max_batches = 5;
  const PolicyParams init = initial_buy_policy(w, c);
  const auto r = train_buy_policy(w, c, init);
  EXPECT_EQ(r.policy.flat(), init.flat());
  ASSERT_EQ(r.state.history.size(), 5u);
  for (const auto& b : r.state.history) EXPECT_EQ(b.objective, r.state.history[0].objective);
}

TEST(TrainBuy, TinyWorldObjectiveRisesOverFirstFiftyBatches) {
  const ExoWorld w = tiny_world();
  TrainConfig c = small_config();
  c.train_weeks = 3;
  c.batch_size = 1;
  c.hidden = {4};
  c.step_size = 1e-3;
  c.max_batches = 50;
  c.resample_paths = false;
  const auto r = train_buy_policy(w, c, initial_buy_policy(w, c));
  ASSERT_EQ(r.state.history.size(), 50u);
  for (std::size_t k = 1; k < 50; ++k) {
    EXPECT_GT(r.state.history[k].objective, r.state.history[k - 1].objective) << "batch " << k;
  }
  EXPECT_NEAR(r.state.history.back().objective, 38.714297689575162, 1e-9);
}

TEST(TrainBuy, EmptyWorldAndBadWindowAreDomainErrors) {
  const ExoWorld w = tiny_world();
  TrainConfig c = small_config();
  c.train_weeks = 4;
  EXPECT_THROW(train_buy_policy(w, c, initial_buy_policy(w, c)), DomainError);
  c.train_weeks = 3;
  c.batch_size = 0;
  EXPECT_THROW(validate_config(c, w), DomainError);
  ExoWorld none = w;
  none.num_products = 0;
  c.batch_size = 1;
  EXPECT_THROW(validate_config(c, none), DomainError);
}

// Batch-objective gradient against central differences on a smooth 2-week
// world, with and without capacity prices.
TEST(BuyGradient, MatchesFiniteDifferences) {
  testkit::Gen g(501);
  ExoWorld w = flat_world(1, 2, 0, 1);
  for (auto& e : w.weeks[0]) {
    e = g.week(0, 1);
    e.supply_cap_jit = e.supply_cap_llt = 1e6;
    e.vendor_jit = e.vendor_llt = VendorConstraints{0.0, 0.0};
  }
  w.init_inventory = {2.5};
  for (bool priced : {false, true}) {
    TrainConfig c = small_config();
    c.priced = priced;
    c.hidden = {5};
    PolicyParams p = initial_buy_policy(w, c);
    const std::vector<std::size_t> prods = {0};
    const std::vector<std::vector<double>> prices = {{0.3, 0.7}};
    const auto* pp = priced ? &prices : nullptr;
    std::vector<double> grad;
    buy_batch_objective(w, p, prods, pp, 0, 2, &grad);
    const std::vector<double> theta = p.flat();
    double worst = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double eps = 1e-6;
      auto hi = theta, lo = theta;
      hi[k] += eps;
      lo[k] -= eps;
      p.set_flat(hi);
      const double fh = buy_batch_objective(w, p, prods, pp, 0, 2, nullptr);
      p.set_flat(lo);
      const double fl = buy_batch_objective(w, p, prods, pp, 0, 2, nullptr);
      const double num = (fh - fl) / (2 * eps);
      worst = std::max(worst, std::fabs(num - grad[k]) / std::max({std::fabs(num), std::fabs(grad[k]), 1e-3}));
    }
    EXPECT_LT(worst, 1e-4) << (priced ? "priced" : "plain");
  }
}

TEST(TrainBuy, SeededRunsAreBitIdenticalAcrossThreadCounts) {
  const GenSpec spec = small_spec();
  const ExoWorld w = generate_world(spec);
  const WorldSource src = source_for(spec);
  TrainConfig c = small_config();
  c.priced = true;
  const PolicyParams init = initial_buy_policy(w, c);
  const auto a = train_buy_policy(w, c, init, &src);
  const auto b = train_buy_policy(w, c, init, &src);
  c.threads = 3;
  const auto d = train_buy_policy(w, c, init, &src);
  EXPECT_EQ(a.state.history, b.state.history);
  EXPECT_EQ(a.policy.flat(), b.policy.flat());
  EXPECT_EQ(a.state.history, d.state.history);
  EXPECT_EQ(a.policy.flat(), d.policy.flat());
  EXPECT_NE(a.policy.flat(), init.flat());
}

TEST(TrainBuy, CheckpointResumeEqualsUninterrupted) {
  const GenSpec spec = small_spec();
  const ExoWorld w = generate_world(spec);
  const WorldSource src = source_for(spec);
  TrainConfig c = small_config();
  c.priced = true;
  const PolicyParams init = initial_buy_policy(w, c);
  c.max_batches = 8;
  const auto full = train_buy_policy(w, c, init, &src);

  const fs::path ck = temp("dualsrc_buy_resume.ckpt");
  c.max_batches = 4;
  c.checkpoint_path = ck;
  train_buy_policy(w, c, init, &src);
  const TrainState mid = load_checkpoint(ck);
  EXPECT_EQ(mid.step, 4u);
  c.max_batches = 8;
  const auto resumed = train_buy_policy(w, c, init, &src, &mid);
  EXPECT_EQ(resumed.state.history, full.state.history);
  EXPECT_EQ(resumed.policy.flat(), full.policy.flat());
  EXPECT_EQ(resumed.state.adam_m, full.state.adam_m);
  EXPECT_GE(full.state.epoch, 2u);  // crosses several resampled epochs
  fs::remove(ck);
}

TEST(Checkpoint, RoundTripAndTruncation) {
  TrainState s;
  s.kind = "buy";
  s.params = {1.0, -2.0, 0.5};
  s.adam_m = {0.1, 0.2, 0.3};
  s.adam_v = {0.01, 0.02, 0.03};
  s.step = 7;
  s.epoch = 2;
  s.epoch_pos = 1;
  s.perm = {2, 0, 1};
  s.rng_state = "42";
  s.history = {{1, 3.5, 0.25, 0.0}, {2, 4.5, 0.125, 0.0}};
  const fs::path p = temp("dualsrc_ckpt_roundtrip.ckpt");
  save_checkpoint(p, s);
  const TrainState t = load_checkpoint(p);
  EXPECT_EQ(t.params, s.params);
  EXPECT_EQ(t.adam_v, s.adam_v);
  EXPECT_EQ(t.history, s.history);
  EXPECT_EQ(t.perm, s.perm);
  EXPECT_EQ(t.step, 7u);
  fs::resize_file(p, fs::file_size(p) - 5);
  EXPECT_THROW(load_checkpoint(p), ParseError);
  fs::remove(p);
}

TEST(TrainConfigJson, RoundTripAndUnknownKey) {
  TrainConfig c = small_config();
  c.hidden = {9, 3};
  c.violation_weight = 17.0;
  c.priced = true;
  nlohmann::json j = c;
  TrainConfig d = j.get<TrainConfig>();
  EXPECT_EQ(nlohmann::json(d), j);
  j["no_such_option"] = 1;
  EXPECT_THROW(j.get<TrainConfig>(), DomainError);
}

TEST(Convergence, FlatHistoryConvergesRisingDoesNot) {
  TrainConfig c;
  c.conv_window = 5;
  c.conv_patience = 10;
  std::vector<BatchLog> flat, rising;
  for (std::size_t k = 0; k < 20; ++k) {
    flat.push_back({k + 1, 100.0, 0, 0});
    rising.push_back({k + 1, 100.0 + 10.0 * static_cast<double>(k), 0, 0});
  }
  EXPECT_TRUE(has_converged(flat, c, true));
  EXPECT_FALSE(has_converged(rising, c, true));
  EXPECT_TRUE(has_converged(rising, c, false));
  flat.pop_back();
  flat.pop_back();
  EXPECT_TRUE(has_converged(flat, c, true));
  flat.resize(14);
  EXPECT_FALSE(has_converged(flat, c, true));  // too short to judge
}

TEST(SamplePricePath, BlocksAndRange) {
  const ExoWorld w = flat_world(1, 20, 1, 4, {5.0, 8.0});
  TrainConfig c;
  std::mt19937_64 rng(5);
  const auto path = sample_price_path(w, 0, 20, c, rng);
  ASSERT_EQ(path.size(), 20u);
  for (std::size_t t = 0; t < 20; ++t) {
    EXPECT_GE(path[t], 0.0);
    EXPECT_LE(path[t], c.price_rel_max * 8.0);
    if (t % c.price_block != 0) EXPECT_EQ(path[t], path[t - 1]);
  }
}

TEST(SampleCapacityPaths, DeterministicBlockwiseWithinRange) {
  const std::vector<double> ref = {10, 40, 20, 30, 25, 5, 15, 35, 40, 10};
  const auto a = sample_capacity_paths(ref, 10, 100, 9);
  const auto b = sample_capacity_paths(ref, 10, 100, 9);
  const auto c = sample_capacity_paths(ref, 10, 100, 10);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (const auto& p : a) {
    ASSERT_EQ(p.size(), 10u);
    for (std::size_t t = 0; t < 10; ++t) {
      EXPECT_GE(p[t], 0.5 * 40 - 1e-12);
      EXPECT_LE(p[t], 1.2 * 40 + 1e-12);
      if (t % 4 != 0) EXPECT_EQ(p[t], p[t - 1]);
    }
  }
  EXPECT_THROW(sample_capacity_paths(ref, 10, 0, 1), DomainError);
  EXPECT_THROW(sample_capacity_paths(std::vector<double>(4, 0.0), 4, 1, 1), DomainError);
}

TEST(SampleCapacityPaths, FractionDirection) {
  const std::vector<double> ref = {10, 40, 20, 30, 25, 5, 15, 35};
  const auto loose = sample_capacity_paths(ref, 8, 1, 1, 1.2, 1.2);
  const auto tight = sample_capacity_paths(ref, 8, 1, 1, 0.5, 0.5);
  bool binds = false;
  for (std::size_t t = 0; t < 8; ++t) {
    EXPECT_LE(ref[t], loose[0][t]);
    binds = binds || ref[t] > tight[0][t];
  }
  EXPECT_TRUE(binds);
  EXPECT_GT(ref[1], tight[0][1]);  // the peak week
}

TEST(UnconstrainedVolumes, MatchesPopulationSimulation) {
  const ExoWorld w = generate_world(small_spec());
  TrainConfig c = small_config();
  c.priced = true;
  const PolicyParams pol = initial_buy_policy(w, c);
  const std::vector<std::size_t> prods = {0, 2};
  std::vector<SimState> st = {initial_state(w, 0, 0), initial_state(w, 2, 0)};
  std::vector<std::vector<Action>> hist(2);
  const auto v = unconstrained_volumes(w, pol, prods, st, hist, 0, 10);
  const std::vector<SimState> s0 = {initial_state(w, 0, 0), initial_state(w, 2, 0)};
  const std::vector<std::vector<Action>> h0(2);
  const auto ref = simulate_population_volumes(w, prods, s0, h0, pol, 0, std::vector<double>(10, 0.0));
  for (std::size_t t = 0; t < 10; ++t) EXPECT_NEAR(v[t], ref[t], 1e-9 * std::max(1.0, ref[t]));
  EXPECT_EQ(hist[0].size(), 10u);
  EXPECT_EQ(st[0].week, 10u);
}

namespace {

struct CoordSetup {
  GenSpec spec = small_spec();
  ExoWorld world = generate_world(spec);
  TrainConfig cfg;
  PolicyParams buy;
  CoordParams init;
  CoordSetup() {
    cfg = small_config();
    cfg.priced = true;
    cfg.coord_products = 4;
    cfg.coord_hidden = {8};
    cfg.coord_burn_in = 6;
    cfg.train_weeks = 16;
    cfg.max_batches = 4;
    buy = initial_buy_policy(world, cfg);
    init = initial_coordinator(world, cfg);
  }
};

}  // namespace

TEST(TrainCoordinator, FrozenBuyPolicyAndZeroStep) {
  CoordSetup s;
  const auto before = s.buy.flat();
  s.cfg.step_size = 0.0;
  const auto r = train_coordinator(s.world, s.buy, s.cfg, s.init);
  EXPECT_EQ(s.buy.flat(), before);
  EXPECT_EQ(r.coordinator.net.flat, s.init.net.flat);
  s.cfg.step_size = 1e-2;
  const auto moved = train_coordinator(s.world, s.buy, s.cfg, s.init);
  EXPECT_EQ(s.buy.flat(), before);
  EXPECT_NE(moved.coordinator.net.flat, s.init.net.flat);
}

TEST(TrainCoordinator, SeededReproducibilityAndResume) {
  CoordSetup s;
  const WorldSource src = source_for(s.spec);
  s.cfg.max_batches = 6;
  const auto full = train_coordinator(s.world, s.buy, s.cfg, s.init, &src);
  const auto again = train_coordinator(s.world, s.buy, s.cfg, s.init, &src);
  EXPECT_EQ(full.state.history, again.state.history);
  EXPECT_EQ(full.coordinator.net.flat, again.coordinator.net.flat);

  const fs::path ck = temp("dualsrc_coord_resume.ckpt");
  s.cfg.max_batches = 3;
  s.cfg.checkpoint_path = ck;
  train_coordinator(s.world, s.buy, s.cfg, s.init, &src);
  const TrainState mid = load_checkpoint(ck);
  s.cfg.max_batches = 6;
  const auto resumed = train_coordinator(s.world, s.buy, s.cfg, s.init, &src, &mid);
  EXPECT_EQ(resumed.state.history, full.state.history);
  EXPECT_EQ(resumed.coordinator.net.flat, full.coordinator.net.flat);
  fs::remove(ck);
}

TEST(TrainCoordinator, MismatchedHorizonAndBurnInRejected) {
  CoordSetup s;
  CoordParams bad = s.init;
  bad.spec.horizon += 1;
  EXPECT_THROW(train_coordinator(s.world, s.buy, s.cfg, bad), DomainError);
  s.cfg.coord_burn_in = 40;
  EXPECT_THROW(train_coordinator(s.world, s.buy, s.cfg, s.init), DomainError);
}

TEST(TrainCoordinator, InfiniteCapacityDrivesPricesDown) {
  CoordSetup s;
  s.cfg.coord_infinite_capacity = true;
  s.cfg.max_batches = 60;
  s.cfg.step_size = 3e-2;
  const auto r = train_coordinator(s.world, s.buy, s.cfg, s.init);
  EXPECT_LT(r.state.history.back().objective, r.state.history.front().objective * 0.2);
}
