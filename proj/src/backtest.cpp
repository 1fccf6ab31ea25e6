#include "dualsrc/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "dualsrc/errors.hpp"

namespace dualsrc {

ViolationMetrics violation_metrics(std::span<const double> volumes,
                                   std::span<const double> limits,
                                   std::span<const double> reference_volumes) {
  const std::size_t n = volumes.size();
  if (limits.size() != n || reference_volumes.size() != n) {
    throw DomainError("violation_metrics: lengths differ");
  }
  ViolationMetrics m;
  if (n == 0) {
    m.binding_filter_empty = true;
    return m;
  }
  double sum = 0.0, sum_binding = 0.0;
  std::size_t big = 0, big_binding = 0, binding = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double k = limits[t];
    if (!(k > 0.0)) throw DomainError("violation_metrics: K must be > 0 (week " + std::to_string(t) + ")");
    const double v = std::isfinite(k) ? std::max(0.0, (volumes[t] - k) / k) : 0.0;
    const bool is_binding = reference_volumes[t] >= 0.9 * k;
    sum += v;
    if (v > 0.10) ++big;
    if (is_binding) {
      ++binding;
      sum_binding += v;
      if (v > 0.10) ++big_binding;
    }
  }
  const double dn = static_cast<double>(n);
  m.m1 = 100.0 * sum / dn;
  m.m3 = 100.0 * static_cast<double>(big) / dn;
  if (binding == 0) {
    m.binding_filter_empty = true;
  } else {
    m.m2 = 100.0 * sum_binding / static_cast<double>(binding);
    m.m4 = 100.0 * static_cast<double>(big_binding) / static_cast<double>(binding);
  }
  return m;
}

namespace {

std::size_t end_of(const ExoWorld& w, const BacktestConfig& cfg) {
  const std::size_t end = cfg.end_week == 0 ? w.horizon : cfg.end_week;
  if (cfg.start_week >= end || end > w.horizon) {
    throw DomainError("backtest window [" + std::to_string(cfg.start_week) + ", " +
                      std::to_string(end) + ") does not fit horizon " + std::to_string(w.horizon));
  }
  return end;
}

OrderPolicy<double> make_policy(const PolicyEntry& e) {
  switch (e.kind) {
    case PolicyKind::kBsht:
      return make_bsht_policy();
    case PolicyKind::kTbs:
      return make_tbs_policy(TbsConfig{e.alpha});
    case PolicyKind::kRl:
      if (e.params == nullptr) throw DomainError("policy '" + e.name + "' has no parameters");
      return make_rl_policy(*e.params);
  }
  throw DomainError("unknown policy kind");
}

}  // namespace

WarmStart warm_start(const ExoWorld& w, std::size_t start_week) {
  WarmStart ws;
  const auto bsht = make_bsht_policy();
  for (std::size_t i = 0; i < w.num_products; ++i) {
    if (start_week == 0) {
      ws.states.push_back(initial_state(w, i, 0));
      ws.histories.emplace_back();
      continue;
    }
    Trajectory tr = rollout(w, i, bsht, nullptr, initial_state(w, i, 0), start_week);
    ws.states.push_back(std::move(tr.final_state));
    ws.histories.push_back(std::move(tr.actions));
  }
  return ws;
}

std::vector<RewardRow> run_reward_backtest(const ExoWorld& w,
                                           const std::vector<PolicyEntry>& policies,
                                           const BacktestConfig& cfg) {
  const std::size_t end = end_of(w, cfg);
  const WarmStart ws = warm_start(w, cfg.start_week);
  std::vector<RewardRow> rows;
  for (const PolicyEntry& e : policies) {
    const OrderPolicy<double> pol = make_policy(e);
    RewardRow row;
    row.policy = e.name;
    for (std::size_t i = 0; i < w.num_products; ++i) {
      SimState s = ws.states[i];
      std::vector<Action> hist = ws.histories[i];
      double disc = 1.0, total = 0.0;
      ProductTrace trace;
      trace.product = i;
      for (std::size_t t = cfg.start_week; t < end; ++t) {
        PolicyInput<double> in{w, i, t, s, hist, {}};
        const Action a = pol(in);
        check_action(a.qty_jit, a.qty_llt, t);
        const StepOutcome o = advance(s, w.at(i, t), a, std::optional<double>(), w.unit_volumes[i]);
        total += disc * o.reward;
        disc *= w.discount_factor;
        hist.push_back(a);
        if (cfg.export_products) {
          trace.steps.push_back(o);
          trace.demand.push_back(w.at(i, t).demand);
        }
      }
      row.reward += total;
      if (cfg.export_products) row.traces.push_back(std::move(trace));
    }
    rows.push_back(std::move(row));
  }
  const RewardRow* ref = nullptr;
  for (std::size_t k = 0; k < policies.size(); ++k) {
    if (policies[k].kind == PolicyKind::kBsht) {
      ref = &rows[k];
      break;
    }
  }
  for (RewardRow& r : rows) {
    r.pct_of_bsht = ref != nullptr && ref->reward != 0.0
                        ? 100.0 * (r.reward / ref->reward)
                        : std::numeric_limits<double>::quiet_NaN();
  }
  return rows;
}

std::vector<double> reference_volumes(const ExoWorld& w, const PolicyParams& policy,
                                      const WarmStart& start, const BacktestConfig& cfg) {
  const std::vector<double> inf(w.horizon, std::numeric_limits<double>::infinity());
  return run_capacity_path(w, policy, "none", nullptr, inf, start, cfg).volume;
}

CapacityRun run_capacity_path(const ExoWorld& w, const PolicyParams& policy,
                              const std::string& coordinator,
                              const CoordParams* neural,
                              std::span<const double> capacity,
                              const WarmStart& start, const BacktestConfig& cfg) {
  const std::size_t end = end_of(w, cfg);
  if (capacity.size() < w.horizon) throw DomainError("capacity path shorter than horizon");
  const bool use_mpc = coordinator == "mpc";
  const bool use_neural = coordinator == "neural";
  if (!use_mpc && !use_neural && coordinator != "none") {
    throw DomainError("unknown coordinator '" + coordinator + "'");
  }
  if (use_neural && neural == nullptr) throw DomainError("neural coordinator requested without parameters");
  const std::size_t slots = policy.features.price_slots;
  if ((use_mpc || use_neural) && slots == 0) {
    throw DomainError("coordinated runs need a priced policy");
  }
  if (use_neural && neural->spec.slots() != slots) {
    throw DomainError("coordinator horizon does not match the policy's price slots");
  }

  CapacityRun run;
  run.coordinator = coordinator;
  std::vector<std::size_t> products(w.num_products);
  for (std::size_t i = 0; i < products.size(); ++i) products[i] = i;
  std::vector<SimState> states = start.states;
  std::vector<std::vector<Action>> hist = start.histories;
  std::vector<Action> last(w.num_products);
  std::optional<PlanningWorld> plan;
  if (use_mpc) plan.emplace(w);
  std::vector<double> forecast(slots, 0.0);
  std::vector<double> mpc_lambda;
  double disc = 1.0;
  for (std::size_t t = cfg.start_week; t < end; ++t) {
    if (use_neural) {
      for (std::size_t i = 0; i < products.size(); ++i) {
        last[i] = hist[i].empty() ? Action{} : hist[i].back();
      }
      const std::vector<double> prev = run.forecasts.empty() ? std::vector<double>{} : run.forecasts.back();
      CoordInput ci{w, products, states, last, t, capacity, run.lambda, prev};
      forecast = forecast_prices(*neural, coord_featurize(neural->spec, ci));
    } else if (use_mpc) {
      plan->plan_from(t, slots - 1);
      const std::size_t len = std::min(slots, w.horizon - t);
      std::vector<double> warm;
      if (!mpc_lambda.empty()) warm.assign(mpc_lambda.begin() + 1, mpc_lambda.end());
      const ExoWorld& pw = plan->world();
      VolumeSimulator sim = [&](std::span<const double> lambda) {
        return simulate_population_volumes(pw, products, states, hist, policy, t, lambda);
      };
      MpcResult r = mpc_dual_search(sim, capacity.subspan(t, len), cfg.mpc, warm);
      if (r.hit_cap) ++run.mpc_cap_hits;
      mpc_lambda = r.lambda;
      for (std::size_t k = 0; k < slots; ++k) forecast[k] = r.lambda[std::min(k, len - 1)];
    }
    double volume = 0.0;
    for (std::size_t i = 0; i < products.size(); ++i) {
      PolicyInput<double> in{w, i, t, states[i], hist[i], forecast};
      const Action a = rl_order(policy, in);
      const StepOutcome o = advance(states[i], w.at(i, t), a, std::optional<double>(), w.unit_volumes[i]);
      run.reward += disc * o.reward;
      hist[i].push_back(a);
      volume += w.unit_volumes[i] * states[i].onhand;
    }
    disc *= w.discount_factor;
    run.volume.push_back(volume);
    run.capacity.push_back(capacity[t]);
    run.lambda.push_back(forecast.empty() ? 0.0 : forecast[0]);
    run.forecasts.push_back(forecast);
  }
  return run;
}

std::vector<std::vector<double>> binding_capacity_paths(
    const ExoWorld& w, std::span<const double> reference, const BacktestConfig& cfg,
    std::size_t count, std::uint64_t seed, double lo, double hi, std::size_t block) {
  const std::size_t end = end_of(w, cfg);
  const std::size_t len = end - cfg.start_week;
  if (reference.size() != len) throw DomainError("reference volume length != backtest window");
  double peak = 0.0;
  for (double v : reference) peak = std::max(peak, v);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> frac(lo, hi);
  std::vector<std::vector<double>> out;
  for (std::size_t attempt = 0; attempt < 10 * count && out.size() < count; ++attempt) {
    std::vector<double> path(w.horizon, 0.0);
    for (std::size_t t = 0; t < len; t += block) {
      const double k = frac(rng) * peak;
      for (std::size_t u = t; u < std::min(len, t + block); ++u) path[cfg.start_week + u] = k;
    }
    // Outside the window the limit only feeds lookahead features.
    for (std::size_t u = 0; u < cfg.start_week; ++u) path[u] = path[cfg.start_week];
    for (std::size_t u = end; u < w.horizon; ++u) path[u] = path[end - 1];
    const auto m = violation_metrics(reference, std::span<const double>(path).subspan(cfg.start_week, len),
                                     reference);
    if (m.m1 > 0.0) out.push_back(std::move(path));
  }
  return out;
}

BacktestReport run_backtest(const ExoWorld& w,
                            const std::vector<PolicyEntry>& policies,
                            const PolicyParams* priced_policy,
                            const CoordParams* neural,
                            const std::vector<std::string>& coordinators,
                            const std::vector<std::vector<double>>& capacity_paths,
                            const BacktestConfig& cfg) {
  BacktestReport rep;
  rep.meta["start_week"] = cfg.start_week;
  rep.meta["end_week"] = end_of(w, cfg);
  rep.meta["world_hash"] = world_hash(w);
  if (!policies.empty()) rep.rewards = run_reward_backtest(w, policies, cfg);
  if (priced_policy == nullptr || capacity_paths.empty()) return rep;

  const WarmStart ws = warm_start(w, cfg.start_week);
  const std::vector<double> inf(w.horizon, std::numeric_limits<double>::infinity());
  CapacityRun ref = run_capacity_path(w, *priced_policy, "none", nullptr, inf, ws, cfg);
  rep.reference_volume = ref.volume;
  rep.reference_reward = ref.reward;
  for (std::size_t p = 0; p < capacity_paths.size(); ++p) {
    for (const std::string& c : coordinators) {
      CapacityRun run = c == "none" ? ref
                                    : run_capacity_path(w, *priced_policy, c, neural,
                                                        capacity_paths[p], ws, cfg);
      run.policy = "dualsrc-rl";
      run.coordinator = c;
      run.path = p;
      run.capacity.assign(capacity_paths[p].begin() + static_cast<long>(cfg.start_week),
                          capacity_paths[p].begin() + static_cast<long>(rep.meta["end_week"].get<std::size_t>()));
      run.metrics = violation_metrics(run.volume, run.capacity, rep.reference_volume);
      run.reward_pct = rep.reference_reward != 0.0 ? 100.0 * (run.reward / rep.reference_reward) : 0.0;
      rep.runs.push_back(std::move(run));
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------

nlohmann::json report_to_json(const BacktestReport& r) {
  nlohmann::json j;
  j["meta"] = r.meta;
  j["rewards"] = nlohmann::json::array();
  for (const auto& row : r.rewards) {
    j["rewards"].push_back({{"policy", row.policy}, {"reward", row.reward}, {"pct_of_bsht", row.pct_of_bsht}});
  }
  j["reference_volume"] = r.reference_volume;
  j["reference_reward"] = r.reference_reward;
  j["runs"] = nlohmann::json::array();
  for (const auto& run : r.runs) {
    j["runs"].push_back({{"policy", run.policy},
                         {"coordinator", run.coordinator},
                         {"path", run.path},
                         {"reward", run.reward},
                         {"reward_pct", run.reward_pct},
                         {"m1", run.metrics.m1},
                         {"m2", run.metrics.m2},
                         {"m3", run.metrics.m3},
                         {"m4", run.metrics.m4},
                         {"binding_filter_empty", run.metrics.binding_filter_empty},
                         {"mpc_cap_hits", run.mpc_cap_hits},
                         {"volume", run.volume},
                         {"capacity", run.capacity},
                         {"lambda", run.lambda}});
  }
  return j;
}

BacktestReport report_from_json(const nlohmann::json& j) {
  BacktestReport r;
  try {
    r.meta = j.at("meta");
    for (const auto& row : j.at("rewards")) {
      RewardRow rr;
      rr.policy = row.at("policy").get<std::string>();
      rr.reward = row.at("reward").get<double>();
      rr.pct_of_bsht = row.at("pct_of_bsht").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                       : row.at("pct_of_bsht").get<double>();
      r.rewards.push_back(rr);
    }
    r.reference_volume = j.at("reference_volume").get<std::vector<double>>();
    r.reference_reward = j.at("reference_reward").get<double>();
    for (const auto& x : j.at("runs")) {
      CapacityRun run;
      run.policy = x.at("policy").get<std::string>();
      run.coordinator = x.at("coordinator").get<std::string>();
      run.path = x.at("path").get<std::size_t>();
      run.reward = x.at("reward").get<double>();
      run.reward_pct = x.at("reward_pct").get<double>();
      run.metrics.m1 = x.at("m1").get<double>();
      run.metrics.m2 = x.at("m2").get<double>();
      run.metrics.m3 = x.at("m3").get<double>();
      run.metrics.m4 = x.at("m4").get<double>();
      run.metrics.binding_filter_empty = x.at("binding_filter_empty").get<bool>();
      run.mpc_cap_hits = x.at("mpc_cap_hits").get<std::size_t>();
      run.volume = x.at("volume").get<std::vector<double>>();
      run.capacity = x.at("capacity").get<std::vector<double>>();
      run.lambda = x.at("lambda").get<std::vector<double>>();
      r.runs.push_back(std::move(run));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what(), 0);
  }
  return r;
}

std::map<std::string, double> summarize(const BacktestReport& r) {
  std::map<std::string, double> s;
  for (const auto& row : r.rewards) s["pct_of_bsht." + row.policy] = row.pct_of_bsht;
  std::map<std::string, std::vector<const CapacityRun*>> by;
  for (const auto& run : r.runs) by[run.coordinator].push_back(&run);
  for (const auto& [c, runs] : by) {
    double m1 = 0, m2 = 0, m3 = 0, m4 = 0, rp = 0;
    for (const CapacityRun* run : runs) {
      m1 += run->metrics.m1;
      m2 += run->metrics.m2;
      m3 += run->metrics.m3;
      m4 += run->metrics.m4;
      rp += run->reward_pct;
    }
    const double n = static_cast<double>(runs.size());
    s[c + ".m1"] = m1 / n;
    s[c + ".m2"] = m2 / n;
    s[c + ".m3"] = m3 / n;
    s[c + ".m4"] = m4 / n;
    s[c + ".reward_pct"] = rp / n;
  }
  if (s.count("none.m1") != 0 && s["none.m1"] > 0.0) {
    for (const auto& [c, runs] : by) s[c + ".m1_ratio"] = s[c + ".m1"] / s["none.m1"];
  }
  return s;
}

std::vector<std::string> check_criteria(const std::map<std::string, double>& summary,
                                        const nlohmann::json& criteria) {
  std::vector<std::string> fails;
  for (const auto& [key, rule] : criteria.items()) {
    auto it = summary.find(key);
    if (it == summary.end()) {
      fails.push_back(key + ": missing from report");
      continue;
    }
    const double v = it->second;
    if (rule.contains("min") && !(v >= rule["min"].get<double>())) {
      fails.push_back(key + " = " + std::to_string(v) + " < min " + std::to_string(rule["min"].get<double>()));
    }
    if (rule.contains("max") && !(v <= rule["max"].get<double>())) {
      fails.push_back(key + " = " + std::to_string(v) + " > max " + std::to_string(rule["max"].get<double>()));
    }
  }
  return fails;
}

std::vector<std::filesystem::path> export_trajectories(const BacktestReport& r,
                                                       const std::filesystem::path& dir,
                                                       std::size_t first_week) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  for (const auto& run : r.runs) {
    const auto path = dir / ("traj_" + run.policy + "_" + run.coordinator + "_" +
                             std::to_string(run.path) + ".csv");
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.precision(17);
    os << "week,network_volume,K,lambda\n";
    for (std::size_t t = 0; t < run.volume.size(); ++t) {
      os << first_week + t << ',' << run.volume[t] << ',' << run.capacity[t] << ','
         << run.lambda[t] << '\n';
    }
    if (!os) throw std::runtime_error("write failed: " + path.string());
    out.push_back(path);
  }
  return out;
}

void export_product_trajectories(const RewardRow& row, const std::filesystem::path& path,
                                 std::size_t first_week) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(17);
  os << "week,product,demand,sales,onhand,arrivals_jit,arrivals_llt,reward,lambda\n";
  for (const auto& tr : row.traces) {
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
      const StepOutcome& o = tr.steps[t];
      os << first_week + t << ',' << tr.product << ',' << tr.demand[t] << ',' << o.sales << ','
         << o.onhand_end << ',' << o.arrivals_jit << ',' << o.arrivals_llt << ',' << o.reward
         << ',' << o.lambda << '\n';
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::string render_report(const BacktestReport& r) {
  std::ostringstream os;
  char buf[256];
  if (!r.rewards.empty()) {
    os << "Cumulative discounted reward (% of BSHT)\n";
    std::snprintf(buf, sizeof buf, "  %-14s %16s %10s\n", "policy", "reward", "% BSHT");
    os << buf;
    for (const auto& row : r.rewards) {
      std::snprintf(buf, sizeof buf, "  %-14s %16.1f %10.2f\n", row.policy.c_str(), row.reward,
                    row.pct_of_bsht);
      os << buf;
    }
  }
  if (!r.runs.empty()) {
    const auto s = summarize(r);
    os << "\nCapacity violations (mean over paths, %)\n";
    std::snprintf(buf, sizeof buf, "  %-10s %8s %8s %8s %8s %8s\n", "coord", "M1", "M2", "M3", "M4",
                  "reward");
    os << buf;
    for (const char* c : {"none", "mpc", "neural"}) {
      const std::string k = c;
      if (s.count(k + ".m1") == 0) continue;
      std::snprintf(buf, sizeof buf, "  %-10s %8.2f %8.2f %8.2f %8.2f %8.2f\n", c, s.at(k + ".m1"),
                    s.at(k + ".m2"), s.at(k + ".m3"), s.at(k + ".m4"), s.at(k + ".reward_pct"));
      os << buf;
    }
  }
  return os.str();
}

}  // namespace dualsrc
