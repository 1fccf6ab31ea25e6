#pragma once

// Endogenous inventory dynamics. All arithmetic is written once over a scalar
// type S, instantiated with `double` for evaluation and `ad::Var` for
// differentiating through a rollout.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualsrc/errors.hpp"
#include "dualsrc/exo.hpp"
#include "dualsrc/tape.hpp"

namespace dualsrc {

// Fixed-length ring buffer of scheduled arrivals: at(k) is the quantity due k
// weeks from the current week.
template <class S>
class Pipeline {
 public:
  Pipeline() = default;
  Pipeline(std::size_t len, S zero) : buf_(len, zero), zero_(zero) {}

  std::size_t size() const { return buf_.size(); }
  S& at(std::size_t k) { return buf_[(head_ + k) % buf_.size()]; }
  const S& at(std::size_t k) const { return buf_[(head_ + k) % buf_.size()]; }

  // Removes and returns the quantity due now; the freed slot becomes the
  // furthest-out slot.
  S drain() {
    S due = buf_[head_];
    buf_[head_] = zero_;
    head_ = (head_ + 1) % buf_.size();
    return due;
  }

  // Total over offsets 0..last (inclusive, clipped to the buffer).
  double value_within(std::size_t last) const {
    double s = 0.0;
    for (std::size_t k = 0; k < buf_.size() && k <= last; ++k) {
      s += ad::value_of(at(k));
    }
    return s;
  }
  double total_value() const { return value_within(buf_.size()); }

 private:
  std::vector<S> buf_;
  std::size_t head_ = 0;
  S zero_{};
};

template <class S>
struct BasicSimState {
  S onhand{};
  Pipeline<S> pipeline_jit;
  Pipeline<S> pipeline_llt;
  std::size_t week = 0;
};
using SimState = BasicSimState<double>;

template <class S>
struct BasicStepOutcome {
  S reward{};
  S sales{};
  S onhand_pre{};   // I_{t-}
  S onhand_end{};   // I_t
  S arrivals_jit{};  // JIT units drained this week
  S arrivals_llt{};
  S filled_jit{};    // min(U, f_p(q)) of this week's JIT order
  S filled_llt{};
  double inflight_total = 0.0;  // after the week closes
  double lambda = 0.0;          // applied capacity price (0 if none)
};
using StepOutcome = BasicStepOutcome<double>;

// Empty pipelines, on-hand = the world's initial inventory.
SimState initial_state(const ExoWorld& w, std::size_t product,
                       std::size_t week = 0);
BasicSimState<ad::Var> initial_state(const ExoWorld& w, std::size_t product,
                                     ad::Tape& tape, std::size_t week = 0);
// Lifts a concrete state onto a tape as constant leaves.
BasicSimState<ad::Var> lift_state(const SimState& s, ad::Tape& tape);

// Advances `state` by one week in place. `lambda`, when present, adds the
// capacity penalty lambda * unit_volume * I_t to the reward only.
template <class S>
BasicStepOutcome<S> advance(BasicSimState<S>& state, const ExoProductWeek& exo,
                            const BasicAction<S>& action,
                            const std::optional<S>& lambda,
                            double unit_volume) {
  if (exo.arrival_shares_jit.size() != state.pipeline_jit.size() ||
      exo.arrival_shares_llt.size() != state.pipeline_llt.size()) {
    throw DomainError("step: pipeline length does not match arrival shares");
  }
  BasicStepOutcome<S> out;
  out.filled_jit =
      fulfilled_quantity(action.qty_jit, exo.supply_cap_jit, exo.vendor_jit);
  out.filled_llt =
      fulfilled_quantity(action.qty_llt, exo.supply_cap_llt, exo.vendor_llt);
  for (std::size_t j = 0; j < exo.arrival_shares_jit.size(); ++j) {
    const double r = exo.arrival_shares_jit[j];
    if (r != 0.0) state.pipeline_jit.at(j) = state.pipeline_jit.at(j) + out.filled_jit * r;
  }
  for (std::size_t j = 0; j < exo.arrival_shares_llt.size(); ++j) {
    const double r = exo.arrival_shares_llt[j];
    if (r != 0.0) state.pipeline_llt.at(j) = state.pipeline_llt.at(j) + out.filled_llt * r;
  }
  out.arrivals_jit = state.pipeline_jit.drain();
  out.arrivals_llt = state.pipeline_llt.drain();
  out.onhand_pre = state.onhand + out.arrivals_jit + out.arrivals_llt;
  using std::min;
  using ad::min;
  using ad::max0;
  out.sales = min(exo.demand, out.onhand_pre);
  out.onhand_end = max0(out.onhand_pre - exo.demand);
  out.reward = exo.price * out.sales - exo.cost_jit * out.filled_jit -
               exo.cost_llt * out.filled_llt -
               exo.holding_cost * out.onhand_end;
  if (lambda.has_value()) {
    out.reward = out.reward - (*lambda * unit_volume) * out.onhand_end;
    out.lambda = ad::value_of(*lambda);
  }
  state.onhand = out.onhand_end;
  ++state.week;
  out.inflight_total =
      state.pipeline_jit.total_value() + state.pipeline_llt.total_value();
  return out;
}

// Pure single step.
std::pair<SimState, StepOutcome> step(const SimState& state,
                                      const ExoProductWeek& exo,
                                      const Action& action,
                                      std::optional<double> lambda,
                                      double unit_volume);

// What a policy sees when asked for week `week`'s order.
template <class S>
struct PolicyInput {
  const ExoWorld& world;
  std::size_t product;
  std::size_t week;
  const BasicSimState<S>& state;
  std::span<const BasicAction<S>> past_actions;  // weeks start..week-1
  std::span<const S> price_forecast;             // empty when unpriced
};

template <class S>
using OrderPolicy = std::function<BasicAction<S>(const PolicyInput<S>&)>;

// Per-week capacity prices for the rollout. Slot 0 of the forecast at week t
// is the applied price; remaining slots are lookahead handed to the policy.
struct PricePlan {
  std::vector<double> lambda;  // [week], absolute week index
  std::size_t lookahead = 0;   // forecast length - 1

  // Forecast (lambda_t .. lambda_{t+lookahead}), clamped at the last week.
  std::vector<double> forecast(std::size_t week) const;
};

struct Trajectory {
  std::vector<StepOutcome> steps;
  std::vector<Action> actions;
  double cumulative = 0.0;  // sum_t gamma^(t - start) R_t
  SimState final_state;
};

// Rolls product `product` from `start.week` up to `end_week` (exclusive;
// 0 means the world horizon).
Trajectory rollout(const ExoWorld& world, std::size_t product,
                   const OrderPolicy<double>& policy, const PricePlan* prices,
                   const SimState& start, std::size_t end_week = 0);

// Tape rollout; returns the cumulative discounted reward node. `outcomes`
// receives per-step nodes when non-null.
ad::Var rollout_tape(const ExoWorld& world, std::size_t product,
                     const OrderPolicy<ad::Var>& policy,
                     const PricePlan* prices, ad::Tape& tape,
                     const SimState& start, std::size_t end_week = 0,
                     std::vector<BasicStepOutcome<ad::Var>>* outcomes = nullptr);

double network_volume(std::span<const double> onhand,
                      std::span<const double> unit_volumes);
double network_volume(std::span<const SimState> states,
                      std::span<const double> unit_volumes);

// Throws DomainError unless both order quantities are finite and >= 0.
void check_action(double jit, double llt, std::size_t week);

}  // namespace dualsrc
