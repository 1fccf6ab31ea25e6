#pragma once

// Order policies: base-stock on the horizon tip (JIT only), tailored
// base-surge, and the neural dual-sourcing policy.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dualsrc/exo.hpp"
#include "dualsrc/mlp.hpp"
#include "dualsrc/simulator.hpp"

namespace dualsrc {

constexpr std::size_t kTipWindow = 12;
constexpr std::size_t kSeasonPeriod = 52;

struct HorizonTip {
  double level = 0.0;         // order-up-to units
  std::size_t pred_lead = 0;  // median JIT arrival offset this week
};

// Mean demand over the up-to-`window` weeks before `week` (weeks that exist).
double trailing_mean_demand(const ExoWorld& w, std::size_t product,
                            std::size_t week, std::size_t window = kTipWindow);
double trailing_std_demand(const ExoWorld& w, std::size_t product,
                           std::size_t week, std::size_t window = kTipWindow);

// tip = trailing mean demand x (pred_lead + 1).
HorizonTip horizon_tip(const ExoWorld& w, std::size_t product,
                       std::size_t week);

struct TbsConfig {
  double alpha = 0.0;
  std::size_t window = kTipWindow;
};

// Units scheduled to arrive within offsets 0..last on both channels.
template <class S>
S inflight_within(const BasicSimState<S>& state, std::size_t last) {
  S total{};
  bool first = true;
  for (std::size_t k = 0; k <= last; ++k) {
    for (const Pipeline<S>* p : {&state.pipeline_jit, &state.pipeline_llt}) {
      if (k >= p->size()) continue;
      if (first) {
        total = p->at(k);
        first = false;
      } else {
        total = total + p->at(k);
      }
    }
  }
  return total;
}

// LLT leg: alpha/window times the sum of demand over weeks t-window+1 .. t-1.
double tbs_llt_quantity(const ExoWorld& w, std::size_t product,
                        std::size_t week, const TbsConfig& cfg);

template <class S>
BasicAction<S> tbs_order(const ExoWorld& w, std::size_t product,
                         std::size_t week, const BasicSimState<S>& state,
                         const TbsConfig& cfg) {
  using ad::max0;
  const HorizonTip tip = horizon_tip(w, product, week);
  const S position = state.onhand + inflight_within(state, tip.pred_lead);
  BasicAction<S> a;
  a.qty_jit = max0(tip.level - position);
  a.qty_llt = a.qty_jit * 0.0 + tbs_llt_quantity(w, product, week, cfg);
  return a;
}

template <class S>
BasicAction<S> bsht_order(const ExoWorld& w, std::size_t product,
                          std::size_t week, const BasicSimState<S>& state) {
  BasicAction<S> a = tbs_order(w, product, week, state, TbsConfig{0.0});
  a.qty_llt = a.qty_jit * 0.0;
  return a;
}

OrderPolicy<double> make_tbs_policy(const TbsConfig& cfg);
OrderPolicy<double> make_bsht_policy();

// Layout of the neural policy's input vector.
struct FeatureSpec {
  std::size_t demand_lags = 8;
  std::size_t action_lags = 4;
  std::size_t lead_jit = 2;
  std::size_t lead_llt = 8;
  std::size_t price_slots = 0;  // 0 = unpriced policy
  std::size_t embed_dim = 2;
  std::size_t num_products = 1;

  // Length of featurize()'s output (embedding excluded).
  std::size_t base_size() const;
  std::size_t input_size() const { return base_size() + embed_dim; }
  bool operator==(const FeatureSpec&) const = default;
};

void to_json(nlohmann::json& j, const FeatureSpec& s);
void from_json(const nlohmann::json& j, FeatureSpec& s);

FeatureSpec default_feature_spec(const ExoWorld& w, std::size_t price_slots);

// Names of featurize()'s slots, in order.
std::vector<std::string> feature_names(const FeatureSpec& spec);

// Per-product normalizer: trailing mean demand + 1.
double demand_scale(const ExoWorld& w, std::size_t product, std::size_t week);

// Fixed-length feature vector for week `week`. Reads demand only from weeks
// before `week`; price and costs from `week` itself. Throws DomainError on
// non-finite inputs.
template <class S>
std::vector<S> featurize(const FeatureSpec& spec, const PolicyInput<S>& in);

struct PolicyParams {
  FeatureSpec features;
  MlpParams net;
  std::vector<double> embedding;  // num_products x embed_dim
  bool mask_llt = false;          // JIT-only variant

  std::size_t param_count() const { return net.flat.size() + embedding.size(); }
  // Trainable vector: network weights then embedding.
  std::vector<double> flat() const;
  void set_flat(std::span<const double> flat);
  bool operator==(const PolicyParams&) const = default;
};

PolicyParams make_policy_params(const FeatureSpec& spec,
                                std::vector<std::size_t> hidden,
                                Activation act, std::uint64_t seed,
                                bool mask_llt);

// Network output -> order: softplus(z) x demand scale per channel.
Action rl_order(const PolicyParams& p, const PolicyInput<double>& in);

// Tape forward. `params` holds the bound trainable vector (layout of
// PolicyParams::flat) or is empty to use `p`'s values as constants.
BasicAction<ad::Var> rl_order(const PolicyParams& p,
                              const PolicyInput<ad::Var>& in,
                              std::span<const ad::Var> params);

OrderPolicy<double> make_rl_policy(const PolicyParams& p);

void save_policy(const std::filesystem::path& path, const PolicyParams& p,
                 const nlohmann::json& extra = nlohmann::json::object());
PolicyParams load_policy(const std::filesystem::path& path,
                         nlohmann::json* extra = nullptr);

// Grid for the TBS alpha search: 0, 0.25, ..., 1.5.
std::vector<double> tbs_alpha_grid();

struct AlphaSearchResult {
  double best_alpha = 0.0;
  std::vector<double> alphas;
  std::vector<double> rewards;  // summed discounted reward per alpha
};

// Picks alpha by total discounted reward over weeks [start, end) of all
// products, starting from each product's initial state.
AlphaSearchResult search_tbs_alpha(const ExoWorld& w, std::size_t start_week,
                                   std::size_t end_week);

}  // namespace dualsrc
