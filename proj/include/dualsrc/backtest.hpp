#pragma once

// Held-out evaluation: reward comparison against BSHT and capacity-violation
// metrics under coordinated pricing.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualsrc/coordinator.hpp"
#include "dualsrc/policies.hpp"
#include "dualsrc/simulator.hpp"

namespace dualsrc {

// All values in percent. m2/m4 are reported as 0 with the flag set when no
// week passes the binding filter.
struct ViolationMetrics {
  double m1 = 0.0;  // mean relative violation
  double m2 = 0.0;  // same, weeks where the reference reaches 0.9 K
  double m3 = 0.0;  // share of weeks with violation > 10%
  double m4 = 0.0;  // same, restricted to binding weeks
  bool binding_filter_empty = false;
};

ViolationMetrics violation_metrics(std::span<const double> volumes,
                                   std::span<const double> limits,
                                   std::span<const double> reference_volumes);

enum class PolicyKind { kBsht, kTbs, kRl };

struct PolicyEntry {
  std::string name;
  PolicyKind kind = PolicyKind::kBsht;
  double alpha = 0.0;                    // TBS
  const PolicyParams* params = nullptr;  // RL
};

struct BacktestConfig {
  std::size_t start_week = 72;
  std::size_t end_week = 0;  // 0 = world horizon
  MpcConfig mpc;
  bool export_products = false;  // keep per-product step records
};

struct ProductTrace {
  std::size_t product = 0;
  std::vector<StepOutcome> steps;
  std::vector<double> demand;
};

struct RewardRow {
  std::string policy;
  double reward = 0.0;       // summed discounted reward over products
  double pct_of_bsht = 0.0;
  std::vector<ProductTrace> traces;  // when export_products
};

struct CapacityRun {
  std::string policy;
  std::string coordinator;  // none | mpc | neural
  std::size_t path = 0;
  std::vector<double> volume;    // per backtest week
  std::vector<double> capacity;
  std::vector<double> lambda;    // applied price
  std::vector<std::vector<double>> forecasts;
  double reward = 0.0;           // unpenalized
  double reward_pct = 0.0;       // unconstrained = 100
  ViolationMetrics metrics;
  std::size_t mpc_cap_hits = 0;  // weeks where the dual search hit its cap
};

struct BacktestReport {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<RewardRow> rewards;
  std::vector<CapacityRun> runs;
  std::vector<double> reference_volume;  // unconstrained run
  double reference_reward = 0.0;
};

// Common start state for the backtest window: BSHT from the world's initial
// inventory up to `start_week` ("onhand + inflight" initialization).
struct WarmStart {
  std::vector<SimState> states;
  std::vector<std::vector<Action>> histories;
};
WarmStart warm_start(const ExoWorld& w, std::size_t start_week);

// Table-1 style: every policy from the same warm start, rewards discounted
// from the first backtest week. The first entry named "bsht" (or of kind
// kBsht) is the 100% reference.
std::vector<RewardRow> run_reward_backtest(const ExoWorld& w,
                                           const std::vector<PolicyEntry>& policies,
                                           const BacktestConfig& cfg);

// Lockstep population run of a priced policy under one coordinator and one
// capacity path (absolute-week indexed, at least horizon long).
CapacityRun run_capacity_path(const ExoWorld& w, const PolicyParams& policy,
                              const std::string& coordinator,
                              const CoordParams* neural,
                              std::span<const double> capacity,
                              const WarmStart& start, const BacktestConfig& cfg);

// Table-2 style: unconstrained reference, then each coordinator on each path.
// Paths are absolute-week indexed.
BacktestReport run_backtest(const ExoWorld& w,
                            const std::vector<PolicyEntry>& policies,
                            const PolicyParams* priced_policy,
                            const CoordParams* neural,
                            const std::vector<std::string>& coordinators,
                            const std::vector<std::vector<double>>& capacity_paths,
                            const BacktestConfig& cfg);

// Unconstrained network volume of the priced policy over the backtest window.
std::vector<double> reference_volumes(const ExoWorld& w, const PolicyParams& policy,
                                      const WarmStart& start, const BacktestConfig& cfg);

// Capacity paths over the full horizon whose backtest-window part is drawn
// from the unconstrained peak; keeps only paths the unconstrained run
// violates (M1 > 0), up to `count` (tries at most 10x count draws).
std::vector<std::vector<double>> binding_capacity_paths(
    const ExoWorld& w, std::span<const double> reference, const BacktestConfig& cfg,
    std::size_t count, std::uint64_t seed, double lo = 0.5, double hi = 1.2,
    std::size_t block = 4);

nlohmann::json report_to_json(const BacktestReport& r);
BacktestReport report_from_json(const nlohmann::json& j);

// Flat name -> value summary (percentages), used by criteria files and the
// report renderer. Keys: pct_of_bsht.<policy>, <coord>.m1..m4,
// <coord>.reward_pct, <coord>.m1_ratio (vs unconstrained).
std::map<std::string, double> summarize(const BacktestReport& r);

// Criteria file: {"<key>": {"min": x, "max": y}, ...}. Returns failures.
std::vector<std::string> check_criteria(const std::map<std::string, double>& summary,
                                        const nlohmann::json& criteria);

// One CSV per capacity run: week,network_volume,K,lambda.
std::vector<std::filesystem::path> export_trajectories(const BacktestReport& r,
                                                       const std::filesystem::path& dir,
                                                       std::size_t first_week);
// Per-product rows: week,product,demand,sales,onhand,arrivals_jit,
// arrivals_llt,reward,lambda.
void export_product_trajectories(const RewardRow& row, const std::filesystem::path& path,
                                 std::size_t first_week);

// Plain-text rendering: the reward table, then the violation table.
std::string render_report(const BacktestReport& r);

}  // namespace dualsrc
