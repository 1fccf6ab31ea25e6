#pragma once

// Capacity-price coordination: a neural price forecaster and a receding-
// horizon dual search over a mean-path simulation.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualsrc/exo.hpp"
#include "dualsrc/mlp.hpp"
#include "dualsrc/policies.hpp"
#include "dualsrc/simulator.hpp"

namespace dualsrc {

constexpr std::size_t kCoordPriceLags = 4;

// What the coordinator sees at week `week` before any orders are placed.
struct CoordInput {
  const ExoWorld& world;
  std::span<const std::size_t> products;
  std::span<const SimState> states;        // aligned with products
  std::span<const Action> last_actions;    // aligned; empty = none yet
  std::size_t week = 0;
  std::span<const double> capacity;        // K by absolute week
  std::span<const double> past_prices;     // applied prices of earlier weeks
  std::span<const double> last_forecast;   // forecast issued last week, or empty
};

struct CoordSpec {
  std::size_t horizon = 8;       // L; forecasts cover weeks t..t+L
  double price_scale = 1.0;      // lambda = softplus(z) * price_scale
  std::vector<std::size_t> holiday_weeks = {47, 48, 51};  // week-of-year

  std::size_t feature_count() const;
  std::size_t slots() const { return horizon + 1; }
};

struct CoordParams {
  CoordSpec spec;
  MlpParams net;
};

// Default price scale: 5% of the median price-per-volume across products.
double default_price_scale(const ExoWorld& w);

std::vector<std::string> coord_feature_names(const CoordSpec& spec);

// Aggregates are volume-weighted and divided by K_t (0 when K_t is infinite).
std::vector<double> coord_featurize(const CoordSpec& spec, const CoordInput& in);

CoordParams make_coord_params(const CoordSpec& spec,
                              std::vector<std::size_t> hidden,
                              std::uint64_t seed);

// softplus(MLP(features)) * price_scale, length L+1.
std::vector<double> forecast_prices(const CoordParams& p,
                                    std::span<const double> features);
std::vector<ad::Var> forecast_prices(const CoordParams& p,
                                     std::span<const double> features,
                                     std::span<const ad::Var> weights,
                                     ad::Tape& tape);

void save_coordinator(const std::filesystem::path& path, const CoordParams& p,
                      const nlohmann::json& extra = nlohmann::json::object());
CoordParams load_coordinator(const std::filesystem::path& path,
                             nlohmann::json* extra = nullptr);

struct P3Weights {
  double violation = 1.0;
  double price = 1.0;
  double consistency = 1.0;
  bool relative = false;     // violation as (V-K)/K instead of V-K
  double price_unit = 1.0;   // prices divided by this in both price terms
};

// sum_t [ w_v (V_t - K_t)_+^2 + w_p |lambda_hat_t|_1
//         + w_c sum_{s=1..L, t-s >= 0} (lambda_t - lambda_hat_{t-s}[s])^2 ]
// where lambda_hat_t is the forecast issued at t and lambda_t its slot 0.
// Weeks with infinite K contribute no violation term.
template <class S>
S p3_loss(std::span<const S> volumes, std::span<const double> capacity,
          const std::vector<std::vector<S>>& forecasts, const P3Weights& w);

// ---------------------------------------------------------------------------
// Dual search.

struct MpcConfig {
  double step = 0.5;         // eta_d = step * price_unit / mean(K)
  double price_unit = 1.0;
  double tol = 0.01;         // stop once every (V-K)/K < tol ...
  double slack = 0.10;       // ... and every priced week has V >= (1-slack) K
  std::size_t max_iters = 200;
  bool diminishing = true;   // eta_k = eta_d / sqrt(k + 1)
};

struct MpcResult {
  std::vector<double> lambda;
  std::vector<double> volumes;  // at the returned lambda
  std::size_t iterations = 0;
  bool converged = false;
  bool hit_cap = false;         // warning flag: best-so-far returned
};

// Simulated network volume per horizon week for a candidate price path.
using VolumeSimulator = std::function<std::vector<double>(std::span<const double>)>;

// Projected subgradient ascent on the capacity dual:
// lambda_s <- max(0, lambda_s + eta_k (V_s - K_s)).
MpcResult mpc_dual_search(const VolumeSimulator& simulate,
                          std::span<const double> capacity,
                          const MpcConfig& cfg,
                          std::span<const double> warm_start = {});

// Mean-path planning world: a copy of `w` whose weeks >= `week` (for the
// listed products) carry conditional means: trailing-mean demand, nominal
// arrival shares and mean supply caps.
class PlanningWorld {
 public:
  explicit PlanningWorld(const ExoWorld& actual);
  // Restores observed data before `week` and writes means from `week` on.
  void plan_from(std::size_t week, std::size_t horizon);
  const ExoWorld& world() const { return plan_; }

 private:
  const ExoWorld& actual_;
  ExoWorld plan_;
  std::size_t planned_from_ = 0;
  std::size_t planned_to_ = 0;
};

// Simulates `products` under `policy` on the planning world from their
// current states for weeks t..t+len-1 with the given price path (absolute
// week index t+k -> lambda[k]); returns summed network volume per week.
std::vector<double> simulate_population_volumes(
    const ExoWorld& plan, std::span<const std::size_t> products,
    std::span<const SimState> states,
    std::span<const std::vector<Action>> histories, const PolicyParams& policy,
    std::size_t week, std::span<const double> lambda);

// Rows: week,offset,lambda for every forecast issued.
void export_price_paths(const std::filesystem::path& path,
                        std::size_t first_week,
                        const std::vector<std::vector<double>>& forecasts);

}  // namespace dualsrc
