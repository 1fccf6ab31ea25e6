// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance --cli <dualsrc binary> --work <scratch dir> [--only 3,7]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dualsrc/backtest.hpp"
#include "dualsrc/datagen.hpp"
#include "dualsrc/gradcheck.hpp"
#include "dualsrc/training.hpp"
#include "oracles.hpp"
#include "testkit.hpp"

using namespace dualsrc;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Options {
  std::string cli;
  fs::path work = fs::temp_directory_path() / "dualsrc_acceptance";
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

WorldSource source_for(const GenSpec& spec) {
  return [spec](std::size_t epoch) {
    GenSpec s = spec;
    s.path_seed = derive_seed(spec.seed, epoch, 99);
    return std::make_shared<const ExoWorld>(generate_world(s));
  };
}

// ---------------------------------------------------------------------------
// 1. single-step reward decomposition and conservation

Verdict dynamics_oracle(const Options&) {
  const auto t0 = Clock::now();
  testkit::Gen g(1001);
  double worst = 0.0;
  std::size_t conservation_misses = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t lj = static_cast<std::size_t>(g.integer(0, 3));
    const std::size_t ll = lj + static_cast<std::size_t>(g.integer(1, 8));
    const ExoProductWeek e = g.week(lj, ll);
    const SimState s = g.state(lj, ll);
    const Action a{g.coin(0.2) ? 0.0 : g.uniform(0, 60), g.coin(0.2) ? 0.0 : g.uniform(0, 60)};
    const double v = g.uniform(0.1, 3.0);
    std::optional<double> lambda;
    if (g.coin()) lambda = g.uniform(0.0, 2.0);

    const auto [next, o] = step(s, e, a, lambda, v);
    double residual = o.reward + e.cost_jit * o.filled_jit + e.cost_llt * o.filled_llt +
                      e.holding_cost * o.onhand_end - e.price * o.sales;
    if (lambda) residual += *lambda * v * o.onhand_end;
    worst = std::max(worst, std::fabs(residual));
    // Stock before demand is old stock plus this week's drains.
    if (o.onhand_pre != s.onhand + o.arrivals_jit + o.arrivals_llt) ++conservation_misses;
    if (o.onhand_end != std::max(o.onhand_pre - e.demand, 0.0)) ++conservation_misses;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && conservation_misses == 0 && secs < 1.0,
          fmt("max |decomposition residual| %.2e, conservation misses %zu, %.3fs", worst,
              conservation_misses, secs)};
}

// ---------------------------------------------------------------------------
// 2. autodiff vs central differences

double mlp_grad_error(testkit::Gen& g) {
  const std::size_t in = static_cast<std::size_t>(g.integer(2, 6));
  const std::size_t hid = static_cast<std::size_t>(g.integer(2, 8));
  const std::size_t out = static_cast<std::size_t>(g.integer(1, 3));
  const Activation act = g.coin() ? Activation::kTanh : Activation::kSoftplus;
  const MlpParams layout = mlp_init({in, hid, hid, out}, act, static_cast<std::uint64_t>(g.integer(1, 1 << 20)));
  std::vector<double> x(in), target(out);
  for (double& xi : x) xi = g.uniform(-2, 2);
  for (double& yi : target) yi = g.uniform(-1, 1);
  std::vector<double> point = layout.flat;
  for (double& p : point) p += g.uniform(-0.1, 0.1);
  const auto loss = [&](ad::Tape& tape, std::span<const ad::Var> w) {
    std::vector<ad::Var> xin;
    for (double xi : x) xin.push_back(tape.leaf(xi));
    const auto y = mlp_forward(layout, w, xin);
    ad::Var l = ad::square(y[0] - target[0]);
    for (std::size_t k = 1; k < y.size(); ++k) l = l + ad::square(y[k] - target[k]);
    return l;
  };
  return ad::grad_check(loss, point).max_rel_error;
}

// One product, three weeks, continuous vendors, random economics and shares.
ExoWorld rollout_world(testkit::Gen& g) {
  const std::size_t lj = static_cast<std::size_t>(g.integer(0, 1));
  const std::size_t ll = lj + static_cast<std::size_t>(g.integer(1, 2));
  ExoWorld w = testkit::flat_world(1, 3, lj, ll);
  for (auto& e : w.weeks[0]) {
    e = g.week(lj, ll);
    e.demand = g.uniform(1.0, 20.0);
    e.supply_cap_jit = e.supply_cap_llt = 1e6;
    e.vendor_jit = e.vendor_llt = VendorConstraints{0.0, 0.0};
  }
  w.init_inventory = {g.uniform(0.0, 10.0)};
  w.discount_factor = g.uniform(0.9, 1.0);
  return w;
}

// Max relative error of the rollout gradient against an extrapolated central
// difference, or nullopt when the point sits near a kink (the plain and
// extrapolated estimates disagree).
std::optional<double> rollout_grad_error(testkit::Gen& g) {
  const ExoWorld w = rollout_world(g);
  TrainConfig c;
  c.hidden = {5};
  c.priced = g.coin();
  c.seed = static_cast<std::uint64_t>(g.integer(1, 1 << 20));
  PolicyParams p = initial_buy_policy(w, c);
  std::vector<double> theta = p.flat();
  for (double& t : theta) t += g.uniform(-0.3, 0.3);
  p.set_flat(theta);
  const std::vector<std::size_t> prods = {0};
  std::vector<std::vector<double>> prices = {{g.uniform(0, 0.5), g.uniform(0, 0.5), g.uniform(0, 0.5)}};
  const auto* pp = c.priced ? &prices : nullptr;

  std::vector<double> grad;
  const double f0 = buy_batch_objective(w, p, prods, pp, 0, 3, &grad);
  const auto central = [&](std::size_t k, double eps) {
    auto hi = theta, lo = theta;
    hi[k] += eps;
    lo[k] -= eps;
    p.set_flat(hi);
    const double fh = buy_batch_objective(w, p, prods, pp, 0, 3, nullptr);
    p.set_flat(lo);
    const double fl = buy_batch_objective(w, p, prods, pp, 0, 3, nullptr);
    p.set_flat(theta);
    return (fh - fl) / (2 * eps);
  };
  const double floor = 1e-6 * std::max(1.0, std::fabs(f0));
  double worst = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double n1 = central(k, 1e-4);
    const double n2 = (4.0 * central(k, 5e-5) - n1) / 3.0;  // Richardson step
    if (std::fabs(n1 - n2) > 1e-3 * std::max({std::fabs(n1), std::fabs(n2), 1e-2})) return std::nullopt;
    worst = std::max(worst, std::fabs(n2 - grad[k]) / std::max({std::fabs(n2), std::fabs(grad[k]), floor}));
  }
  return worst;
}

Verdict gradient_check(const Options&) {
  const auto t0 = Clock::now();
  testkit::Gen g(2002);
  double mlp_worst = 0.0;
  for (int k = 0; k < 100; ++k) mlp_worst = std::max(mlp_worst, mlp_grad_error(g));
  double roll_worst = 0.0;
  int kept = 0, skipped = 0;
  while (kept < 100 && skipped < 1000) {
    const auto e = rollout_grad_error(g);
    if (!e) {
      ++skipped;
      continue;
    }
    roll_worst = std::max(roll_worst, *e);
    ++kept;
  }
  const double secs = seconds_since(t0);
  return {mlp_worst < 1e-4 && roll_worst < 1e-4 && kept == 100 && secs < 30.0,
          fmt("mlp max rel err %.2e (100 pts), 3-week rollout max rel err %.2e (%d pts, %d near kinks "
              "skipped), %.1fs",
              mlp_worst, roll_worst, kept, skipped, secs)};
}

// ---------------------------------------------------------------------------
// 3. brute-force optimum on a tiny instance

Verdict brute_force(const Options&) {
  const auto t0 = Clock::now();
  ExoWorld w = testkit::flat_world(1, 3, 0, 1, {0.0, 10.0, 6.0, 4.0, 1.0, 1e9, 1e9});
  const double demand[] = {4, 6, 5};
  for (std::size_t t = 0; t < 3; ++t) w.weeks[0][t].demand = demand[t];
  testkit::make_continuous(w);

  double best = -std::numeric_limits<double>::infinity();
  int q[6];
  for (q[0] = 0; q[0] <= 10; ++q[0])
    for (q[1] = 0; q[1] <= 10; ++q[1])
      for (q[2] = 0; q[2] <= 10; ++q[2])
        for (q[3] = 0; q[3] <= 10; ++q[3])
          for (q[4] = 0; q[4] <= 10; ++q[4])
            for (q[5] = 0; q[5] <= 10; ++q[5]) {
              SimState s = initial_state(w, 0);
              double r = 0.0, disc = 1.0;
              for (std::size_t t = 0; t < 3; ++t) {
                const Action a{static_cast<double>(q[2 * t]), static_cast<double>(q[2 * t + 1])};
                auto [next, o] = step(s, w.weeks[0][t], a, std::nullopt, 1.0);
                s = std::move(next);
                r += disc * o.reward;
                disc *= w.discount_factor;
              }
              best = std::max(best, r);
            }

  TrainConfig c;
  c.batch_size = 1;
  c.train_weeks = 3;
  c.max_batches = 3000;
  c.step_size = 1e-2;
  c.resample_paths = false;
  c.hidden = {16};
  c.seed = 1;
  c.conv_patience = c.max_batches;
  const auto trained = train_buy_policy(w, c, initial_buy_policy(w, c));
  const double rl = rollout(w, 0, make_rl_policy(trained.policy), nullptr, initial_state(w, 0)).cumulative;
  const double secs = seconds_since(t0);
  const double pct = 100.0 * rl / best;
  return {pct >= 95.0 && secs < 300.0,
          fmt("optimum over 11^6 plans %.4f, DualSrc-RL %.4f (%.2f%%), %.1fs", best, rl, pct, secs)};
}

// ---------------------------------------------------------------------------
// 4. reward ordering on the default world

Verdict reward_ordering(const Options&) {
  const auto t0 = Clock::now();
  std::vector<double> dual, tbs, jit;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    GenSpec spec;
    spec.seed = seed;
    const ExoWorld w = generate_world(spec);
    const WorldSource src = source_for(spec);
    BacktestConfig bc;  // 72 training weeks, the rest held out
    TrainConfig c;
    c.seed = seed;
    c.train_weeks = bc.start_week;
    c.mask_llt = true;
    const auto j = train_buy_policy(w, c, initial_buy_policy(w, c), &src);
    c.mask_llt = false;
    const auto d = train_buy_policy(w, c, initial_buy_policy(w, c), &src);
    const double alpha = search_tbs_alpha(w, 0, bc.start_week).best_alpha;
    const std::vector<PolicyEntry> entries = {{"bsht", PolicyKind::kBsht, 0.0, nullptr},
                                              {"tbs", PolicyKind::kTbs, alpha, nullptr},
                                              {"jit-rl", PolicyKind::kRl, 0.0, &j.policy},
                                              {"dualsrc-rl", PolicyKind::kRl, 0.0, &d.policy}};
    const auto rows = run_reward_backtest(w, entries, bc);
    tbs.push_back(rows[1].pct_of_bsht);
    jit.push_back(rows[2].pct_of_bsht);
    dual.push_back(rows[3].pct_of_bsht);
    per_seed += fmt(" [%llu: %.1f/%.1f/%.1f]", static_cast<unsigned long long>(seed), rows[3].pct_of_bsht,
                    rows[1].pct_of_bsht, rows[2].pct_of_bsht);
  }
  const double md = median(dual), mt = median(tbs), mj = median(jit);
  const double secs = seconds_since(t0);
  return {md >= mt + 1.0 && mt > 100.0 && mj >= 95.0 && secs < 1800.0,
          fmt("median %%-of-BSHT DualSrc-RL %.2f, TBS %.2f, JIT-RL %.2f; %.0fs;", md, mt, mj, secs) +
              " seed [dual/tbs/jit]" + per_seed};
}

// ---------------------------------------------------------------------------
// 5 and 6 share a trained priced policy on the default world.

struct PricedSetup {
  GenSpec spec;
  ExoWorld world;
  TrainConfig cfg;
  PolicyParams buy;
  double seconds = 0.0;
};

const PricedSetup& priced_setup() {
  static std::unique_ptr<PricedSetup> s;
  if (!s) {
    const auto t0 = Clock::now();
    s = std::make_unique<PricedSetup>();
    s->world = generate_world(s->spec);
    s->cfg.seed = s->spec.seed;
    s->cfg.priced = true;
    const WorldSource src = source_for(s->spec);
    s->buy = train_buy_policy(s->world, s->cfg, initial_buy_policy(s->world, s->cfg), &src).policy;
    s->seconds = seconds_since(t0);
  }
  return *s;
}

Verdict coordination(const Options&) {
  const auto t0 = Clock::now();
  const PricedSetup& ps = priced_setup();
  const WorldSource src = source_for(ps.spec);
  TrainConfig c = ps.cfg;
  c.max_batches = 200;
  const auto coord = train_coordinator(ps.world, ps.buy, c, initial_coordinator(ps.world, c), &src);

  BacktestConfig bc;
  bc.mpc.price_unit = coord.coordinator.spec.price_scale;
  const auto ref = reference_volumes(ps.world, ps.buy, warm_start(ps.world, bc.start_week), bc);
  const auto paths = binding_capacity_paths(ps.world, ref, bc, 20, 777);
  const auto rep = run_backtest(ps.world, {}, &ps.buy, &coord.coordinator, {"none", "mpc", "neural"}, paths, bc);
  const auto s = summarize(rep);
  const double none = s.at("none.m1"), mpc = s.at("mpc.m1"), neural = s.at("neural.m1");
  const double reward = s.at("neural.reward_pct");
  const double secs = seconds_since(t0);
  const bool ok = paths.size() == 20 && neural <= 0.5 * none && neural <= mpc && reward >= 95.0 &&
                  mpc <= 0.75 * none && secs < 1800.0;
  return {ok, fmt("%zu paths; M1 none %.2f, MPC %.2f, neural %.2f; neural reward %.1f%% of unconstrained; %.0fs",
                  paths.size(), none, mpc, neural, reward, secs)};
}

// ---------------------------------------------------------------------------
// 6. coordinator with unlimited capacity learns to stop pricing

Verdict coordinator_sanity(const Options&) {
  const auto t0 = Clock::now();
  const PricedSetup& ps = priced_setup();
  const WorldSource src = source_for(ps.spec);
  TrainConfig c = ps.cfg;
  c.coord_infinite_capacity = true;
  c.max_batches = 400;
  const auto coord = train_coordinator(ps.world, ps.buy, c, initial_coordinator(ps.world, c), &src);

  BacktestConfig bc;
  const WarmStart ws = warm_start(ps.world, bc.start_week);
  const std::vector<double> inf(ps.world.horizon, std::numeric_limits<double>::infinity());
  const CapacityRun run = run_capacity_path(ps.world, ps.buy, "neural", &coord.coordinator, inf, ws, bc);
  double mean = 0.0;
  for (double l : run.lambda) mean += l;
  mean /= static_cast<double>(run.lambda.size());
  const double initial = std::numbers::ln2 * coord.coordinator.spec.price_scale;

  // Week 2 over capacity by 2, lambda_2 = 2, and earlier forecasts for week 2
  // of 1 (issued at week 1) and 3 (issued at week 0): 4 + 2 + (1 + 1).
  const std::vector<std::vector<double>> fc = {{0, 0, 3}, {0, 1, 0}, {2, 0, 0}};
  const std::vector<double> vol = {0, 0, 12}, cap = {10, 10, 10};
  const double full = p3_loss<double>(vol, cap, fc, P3Weights{});
  const double prefix = p3_loss<double>(std::span(vol).first(2), std::span(cap).first(2),
                                        {fc[0], fc[1]}, P3Weights{});
  const double hand = full - prefix;

  const double secs = seconds_since(t0);
  return {mean < 0.05 * initial && std::fabs(hand - 8.0) <= 1e-9,
          fmt("mean lambda %.4g vs 5%% of initial %.4g; p3_loss example %.12g (want 8); %.0fs", mean,
              0.05 * initial, hand, secs)};
}

// ---------------------------------------------------------------------------
// 7. MPC against a brute-force dual

Verdict mpc_oracle(const Options&) {
  const auto t0 = Clock::now();
  const auto d = testkit::dual_instance();
  const auto outs = testkit::dual_outcomes(d);
  const auto grid = testkit::dual_grid_minimizer(outs, d.capacity);
  const auto r = mpc_dual_search(
      [&](std::span<const double> l) { return testkit::best_response_volumes(outs, l); }, d.capacity,
      MpcConfig{});
  bool same_binding = true;
  double worst = 0.0;
  for (std::size_t s = 0; s < 4; ++s) {
    same_binding = same_binding && ((r.lambda[s] > 0.0) == (grid[s] > 0.0));
    worst = std::max(worst, std::fabs(r.lambda[s] - grid[s]));
  }
  return {same_binding && worst <= 0.2,
          fmt("grid (%.1f,%.1f,%.1f,%.1f) mpc (%.3f,%.3f,%.3f,%.3f), max diff %.3f, %.1fs", grid[0], grid[1],
              grid[2], grid[3], r.lambda[0], r.lambda[1], r.lambda[2], r.lambda[3], worst,
              seconds_since(t0))};
}

// ---------------------------------------------------------------------------
// 8. repeated CLI pipelines are byte-identical

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_in(const fs::path& dir, const std::string& cli, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" + cli + "' " + args + " > log.txt 2>&1";
  return std::system(cmd.c_str());
}

Verdict determinism(const Options& opt) {
  const auto t0 = Clock::now();
  if (opt.cli.empty()) return {false, "no --cli binary given"};
  const std::string cli = fs::absolute(opt.cli).string();
  const fs::path root = fs::absolute(opt.work) / "determinism";
  fs::remove_all(root);
  const std::vector<std::string> steps = {
      "gen --seed 5 --out . --deterministic",
      "train-buy --world world.dsw --mode dualsrc-rl --batches 30 --batch-size 8 --out . --deterministic",
      "train-buy --world world.dsw --mode priced --batches 20 --batch-size 8 --out . --deterministic",
      "train-coord --world world.dsw --policy priced.dspp --batches 10 --batch-size 8 --out . --deterministic",
      "backtest --world world.dsw --dualsrc-rl dualsrc-rl.dspp --jit-rl init --priced priced.dspp "
      "--coordinator coordinator.dscp --paths 3 --out . --deterministic"};
  for (const char* run : {"a", "b"}) {
    fs::create_directories(root / run);
    std::ofstream(root / run / "spec.json") << R"({"num_products": 24, "horizon": 124})";
    for (std::string s : steps) {
      if (s.starts_with("gen")) s += " --spec spec.json";
      if (run == std::string("b") && !s.starts_with("gen")) s += " --threads 2";
      if (run_in(root / run, cli, s) != 0) {
        return {false, "command failed: dualsrc " + s + "\n" + slurp(root / run / "log.txt")};
      }
    }
  }
  const std::vector<std::string> files = {"world.dsw",       "dualsrc-rl.log.csv", "priced.log.csv",
                                          "coordinator.log.csv", "dualsrc-rl.dspp", "coordinator.dscp",
                                          "report.json",     "violations.csv"};
  std::string differing;
  for (const auto& f : files) {
    const std::string a = slurp(root / "a" / f), b = slurp(root / "b" / f);
    if (a.empty() || a != b) differing += " " + f;
  }
  return {differing.empty(), fmt("%zu artifacts compared across two runs, %.1fs", files.size(), seconds_since(t0)) +
                                 (differing.empty() ? "" : ", differing:" + differing)};
}

// ---------------------------------------------------------------------------
// 9. baseline order rules

Verdict baselines(const Options&) {
  SimState s;
  const ExoWorld w = testkit::flat_world(1, 20, 1, 4, {50.0, 1.0});
  const auto state = [&](double onhand, std::vector<double> jit) {
    SimState x = initial_state(w, 0, 0);
    x.onhand = onhand;
    for (std::size_t k = 0; k < jit.size(); ++k) x.pipeline_jit.at(k) = jit[k];
    return x;
  };
  // Demand 50 with a one-week JIT lead: tip 100.
  bool ok = horizon_tip(w, 0, 12).level == 100.0;
  ok = ok && tbs_order(w, 0, 12, state(40.0, {10.0, 20.0}), TbsConfig{0.0}).qty_jit == 30.0;
  const Action b = bsht_order(w, 0, 12, state(40.0, {10.0, 20.0}));
  ok = ok && b.qty_jit == 30.0 && b.qty_llt == 0.0;
  const ExoWorld small = testkit::flat_world(1, 20, 1, 4, {5.0, 1.0});
  ok = ok && tbs_order(small, 0, 12, initial_state(small, 0, 0), TbsConfig{0.0}).qty_jit == 10.0;
  SimState over = initial_state(small, 0, 0);
  over.onhand = 50.0;
  ok = ok && tbs_order(small, 0, 12, over, TbsConfig{0.7}).qty_jit == 0.0;
  const Action edge = bsht_order(w, 0, 12, state(70.0, {20.0, 10.0}));
  ok = ok && edge.qty_jit == 0.0 && edge.qty_llt == 0.0;

  testkit::Gen g(9009);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t lj = static_cast<std::size_t>(g.integer(0, 3));
    const std::size_t ll = lj + static_cast<std::size_t>(g.integer(1, 6));
    ExoWorld rw = testkit::flat_world(1, 20, lj, ll);
    for (auto& e : rw.weeks[0]) e = g.week(lj, ll);
    const SimState st = g.state(lj, ll);
    const std::size_t t = static_cast<std::size_t>(g.integer(0, 19));
    const Action x = tbs_order(rw, 0, t, st, TbsConfig{0.0});
    const Action y = bsht_order(rw, 0, t, st);
    if (x.qty_jit != y.qty_jit || x.qty_llt != y.qty_llt) ++mismatches;
  }
  return {ok && mismatches == 0,
          fmt("examples %s, TBS(0) vs BSHT mismatches %zu / 1000", ok ? "exact" : "WRONG", mismatches)};
}

// ---------------------------------------------------------------------------
// 10. violation metrics

Verdict metrics(const Options&) {
  const std::vector<double> v = {8, 10, 12}, k = {10, 10, 10}, r = {12, 12, 12};
  const auto m = violation_metrics(v, k, r);
  bool ok = std::fabs(m.m1 - 6.67) <= 0.01 && std::fabs(m.m3 - 33.3) <= 0.1 &&
            std::fabs(m.m3 - 100.0 / 3.0) <= 0.01;
  testkit::Gen g(1010);
  double drift = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 20));
    std::vector<double> vv(n), kk(n), rr(n);
    for (std::size_t t = 0; t < n; ++t) {
      kk[t] = g.uniform(1, 100);
      vv[t] = g.uniform(0, 2) * kk[t];
      rr[t] = g.uniform(0, 2) * kk[t];
    }
    const auto base = violation_metrics(vv, kk, rr);
    for (double c : {0.1, 10.0}) {
      auto sv = vv, sk = kk, sr = rr;
      for (std::size_t t = 0; t < n; ++t) {
        sv[t] *= c;
        sk[t] *= c;
        sr[t] *= c;
      }
      const auto sm = violation_metrics(sv, sk, sr);
      drift = std::max({drift, std::fabs(sm.m1 - base.m1), std::fabs(sm.m2 - base.m2),
                        std::fabs(sm.m3 - base.m3), std::fabs(sm.m4 - base.m4)});
    }
  }
  ok = ok && drift <= 1e-9;
  return {ok, fmt("M1 %.4f M3 %.4f, max drift under rescaling %.2e", m.m1, m.m3, drift)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Options opt;
  std::vector<int> only;
  app.add_option("--cli", opt.cli, "dualsrc binary (criterion 8)");
  app.add_option("--work", opt.work, "Scratch directory");
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Verdict(const Options&)>>> criteria = {
      {"dynamics oracle", dynamics_oracle},
      {"gradient check", gradient_check},
      {"brute-force optimality", brute_force},
      {"reward ordering", reward_ordering},
      {"capacity coordination", coordination},
      {"coordinator sanity", coordinator_sanity},
      {"mpc oracle", mpc_oracle},
      {"determinism", determinism},
      {"baseline rules", baselines},
      {"violation metrics", metrics}};

  fs::create_directories(opt.work);
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Verdict v;
    try {
      v = criteria[i].second(opt);
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    std::printf("criterion %2d %s  %s: %s\n", id, v.pass ? "PASS" : "FAIL", criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
