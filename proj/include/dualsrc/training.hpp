#pragma once

// Direct-backpropagation training of the buy policy and the capacity-price
// coordinator, with optimizer state and resumable checkpoints.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualsrc/coordinator.hpp"
#include "dualsrc/exo.hpp"
#include "dualsrc/policies.hpp"

namespace dualsrc {

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  std::size_t batch_size = 16;       // products per batch (M)
  double step_size = 3e-3;           // eta
  std::size_t max_batches = 400;     // hard cap
  std::size_t train_weeks = 72;      // T^Train
  std::size_t start_week = 0;
  std::uint64_t seed = 1;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;            // max gradient L2 norm, 0 = off
  bool deterministic = false;        // zero wall times in the log
  std::size_t threads = 1;

  // Convergence: moving average over `conv_window` batches improves by less
  // than `conv_tol` (relative) across `conv_patience` batches.
  std::size_t conv_window = 50;
  std::size_t conv_patience = 200;
  double conv_tol = 1e-3;

  // Fresh exogenous paths each epoch (needs a world source); otherwise the
  // given world is reused.
  bool resample_paths = true;

  // Priced mode: random capacity-price paths enter features and reward.
  bool priced = false;
  double price_rel_max = 0.12;    // lambda * v / p drawn in [0, this]
  double price_zero_prob = 0.35;  // chance a block is unpriced
  std::size_t price_block = 4;

  // Network.
  std::vector<std::size_t> hidden = {32, 16};
  std::string activation = "tanh";
  bool mask_llt = false;

  // Coordinator training.
  std::size_t coord_products = 40;       // products simulated per batch
  std::vector<std::size_t> coord_hidden = {32, 32};
  double coord_price_scale = 0.0;        // 0 = derive from the world
  double violation_weight = 1000.0;  // on relative violation (V-K)/K
  double price_weight = 1.0;
  double consistency_weight = 1.0;
  double capacity_frac_low = 0.5;
  double capacity_frac_high = 1.2;
  std::size_t capacity_block = 4;
  std::size_t coord_burn_in = 12;        // unconstrained weeks before the loss window
  bool coord_infinite_capacity = false;  // train with K = inf

  std::size_t checkpoint_every = 0;  // batches; 0 = only at the end
  std::filesystem::path checkpoint_path;
  std::filesystem::path log_path;    // CSV: batch,objective,grad_norm,wall_time
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void validate_config(const TrainConfig& c, const ExoWorld& w);

struct BatchLog {
  std::size_t batch = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double wall_time = 0.0;
  bool operator==(const BatchLog&) const = default;
};

// Everything needed to continue training bit-for-bit.
struct TrainState {
  std::string kind;                  // "buy" or "coord"
  std::vector<double> params;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::size_t step = 0;              // batches completed
  std::size_t epoch = 0;
  std::size_t epoch_pos = 0;         // next index into perm
  std::vector<std::size_t> perm;
  std::string rng_state;
  std::vector<BatchLog> history;
  bool converged = false;
  nlohmann::json meta = nlohmann::json::object();  // model layout etc.
};

void save_checkpoint(const std::filesystem::path& path, const TrainState& s);
TrainState load_checkpoint(const std::filesystem::path& path);
void write_train_log(const std::filesystem::path& path,
                     const std::vector<BatchLog>& history);

// Supplies the world used in a given epoch (fresh exogenous paths, same
// product catalogue).
using WorldSource = std::function<std::shared_ptr<const ExoWorld>(std::size_t epoch)>;

// True once the moving-average objective stopped improving (see TrainConfig).
bool has_converged(const std::vector<BatchLog>& history, const TrainConfig& cfg,
                   bool maximize);

// Random piecewise-constant price path for one product, in absolute lambda
// units (relative level lambda * v / p drawn per block).
std::vector<double> sample_price_path(const ExoWorld& w, std::size_t product,
                                      std::size_t weeks, const TrainConfig& cfg,
                                      std::mt19937_64& rng);

PolicyParams initial_buy_policy(const ExoWorld& w, const TrainConfig& cfg);

struct BuyTrainResult {
  PolicyParams policy;
  TrainState state;
};

// Per batch: M products, tape rollout over train_weeks, objective = summed
// discounted reward, gradient ascent step. `source` is used when
// cfg.resample_paths is set; `resume` continues a checkpointed run.
BuyTrainResult train_buy_policy(const ExoWorld& world, const TrainConfig& cfg,
                                const PolicyParams& init,
                                const WorldSource* source = nullptr,
                                const TrainState* resume = nullptr);

// Objective and gradient of one batch (exposed for gradient checks).
double buy_batch_objective(const ExoWorld& world, const PolicyParams& policy,
                           std::span<const std::size_t> products,
                           const std::vector<std::vector<double>>* prices,
                           std::size_t start_week, std::size_t weeks,
                           std::vector<double>* grad, std::size_t threads = 1);

// One optimizer step on `params` with gradient `grad`; sign +1 ascends.
void optimizer_step(TrainState& s, const TrainConfig& cfg,
                    std::span<const double> grad, double sign);

// Capacity paths of `length` weeks: per block of `block` weeks, a fraction
// drawn uniformly from [lo, hi] times the peak of `reference_volumes`.
std::vector<std::vector<double>> sample_capacity_paths(
    std::span<const double> reference_volumes, std::size_t length,
    std::size_t count, std::uint64_t seed, double lo = 0.5, double hi = 1.2,
    std::size_t block = 4);

// Network volume per week of `products` under `policy` with zero prices,
// from the given states over weeks [start, end).
std::vector<double> unconstrained_volumes(const ExoWorld& w,
                                          const PolicyParams& policy,
                                          std::span<const std::size_t> products,
                                          std::vector<SimState>& states,
                                          std::vector<std::vector<Action>>& histories,
                                          std::size_t start, std::size_t end);

CoordParams initial_coordinator(const ExoWorld& w, const TrainConfig& cfg);

struct CoordTrainResult {
  CoordParams coordinator;
  TrainState state;
};

// Per batch: sample products and a capacity path, run the population with
// prices from the coordinator fed to the frozen buy policy, minimize the
// coordination loss over the coordinator's weights.
CoordTrainResult train_coordinator(const ExoWorld& world,
                                   const PolicyParams& buy_policy,
                                   const TrainConfig& cfg,
                                   const CoordParams& init,
                                   const WorldSource* source = nullptr,
                                   const TrainState* resume = nullptr);

// Loss weights the coordinator trainer uses.
P3Weights training_weights(const TrainConfig& cfg, const CoordParams& p);

}  // namespace dualsrc
