#include "dualsrc/simulator.hpp"

#include <cmath>

#include "dualsrc/kernels.hpp"

namespace dualsrc {

SimState initial_state(const ExoWorld& w, std::size_t product,
                       std::size_t week) {
  SimState s;
  s.onhand = w.init_inventory.at(product);
  s.pipeline_jit = Pipeline<double>(w.lead_jit + 1, 0.0);
  s.pipeline_llt = Pipeline<double>(w.lead_llt + 1, 0.0);
  s.week = week;
  return s;
}

BasicSimState<ad::Var> lift_state(const SimState& s, ad::Tape& tape) {
  BasicSimState<ad::Var> out;
  const ad::Var zero = tape.leaf(0.0);
  out.onhand = tape.leaf(s.onhand);
  out.pipeline_jit = Pipeline<ad::Var>(s.pipeline_jit.size(), zero);
  out.pipeline_llt = Pipeline<ad::Var>(s.pipeline_llt.size(), zero);
  for (std::size_t k = 0; k < s.pipeline_jit.size(); ++k) {
    if (s.pipeline_jit.at(k) != 0.0) out.pipeline_jit.at(k) = tape.leaf(s.pipeline_jit.at(k));
  }
  for (std::size_t k = 0; k < s.pipeline_llt.size(); ++k) {
    if (s.pipeline_llt.at(k) != 0.0) out.pipeline_llt.at(k) = tape.leaf(s.pipeline_llt.at(k));
  }
  out.week = s.week;
  return out;
}

BasicSimState<ad::Var> initial_state(const ExoWorld& w, std::size_t product,
                                     ad::Tape& tape, std::size_t week) {
  return lift_state(initial_state(w, product, week), tape);
}

std::pair<SimState, StepOutcome> step(const SimState& state,
                                      const ExoProductWeek& exo,
                                      const Action& action,
                                      std::optional<double> lambda,
                                      double unit_volume) {
  check_action(action.qty_jit, action.qty_llt, state.week);
  SimState next = state;
  StepOutcome out = advance(next, exo, action, lambda, unit_volume);
  return {std::move(next), out};
}

std::vector<double> PricePlan::forecast(std::size_t week) const {
  std::vector<double> f(lookahead + 1, 0.0);
  if (lambda.empty()) return f;
  for (std::size_t k = 0; k <= lookahead; ++k) {
    f[k] = lambda[std::min(week + k, lambda.size() - 1)];
  }
  return f;
}

void check_action(double jit, double llt, std::size_t week) {
  if (!std::isfinite(jit) || !std::isfinite(llt) || jit < 0.0 || llt < 0.0) {
    throw DomainError("policy returned invalid order (" + std::to_string(jit) +
                      ", " + std::to_string(llt) + ") at week " +
                      std::to_string(week));
  }
}

Trajectory rollout(const ExoWorld& world, std::size_t product,
                   const OrderPolicy<double>& policy, const PricePlan* prices,
                   const SimState& start, std::size_t end_week) {
  if (end_week == 0) end_week = world.horizon;
  if (start.week >= end_week || end_week > world.horizon) {
    throw DomainError("rollout: start week outside horizon");
  }
  Trajectory tr;
  tr.steps.reserve(end_week - start.week);
  tr.actions.reserve(end_week - start.week);
  SimState state = start;
  double discount = 1.0;
  std::vector<double> forecast;
  const double volume = world.unit_volumes.at(product);
  while (state.week < end_week) {
    const std::size_t t = state.week;
    if (prices != nullptr) forecast = prices->forecast(t);
    PolicyInput<double> in{world, product, t, state, tr.actions, forecast};
    const Action a = policy(in);
    check_action(a.qty_jit, a.qty_llt, t);
    std::optional<double> lambda;
    if (prices != nullptr) lambda = forecast.front();
    StepOutcome o = advance(state, world.at(product, t), a, lambda, volume);
    tr.cumulative += discount * o.reward;
    discount *= world.discount_factor;
    tr.steps.push_back(o);
    tr.actions.push_back(a);
  }
  tr.final_state = std::move(state);
  return tr;
}

ad::Var rollout_tape(const ExoWorld& world, std::size_t product,
                     const OrderPolicy<ad::Var>& policy,
                     const PricePlan* prices, ad::Tape& tape,
                     const SimState& start, std::size_t end_week,
                     std::vector<BasicStepOutcome<ad::Var>>* outcomes) {
  if (end_week == 0) end_week = world.horizon;
  if (start.week >= end_week || end_week > world.horizon) {
    throw DomainError("rollout: start week outside horizon");
  }
  BasicSimState<ad::Var> state = lift_state(start, tape);
  std::vector<BasicAction<ad::Var>> actions;
  actions.reserve(end_week - start.week);
  std::vector<ad::Var> forecast_vars;
  std::vector<ad::Var> discounted;
  discounted.reserve(end_week - start.week);
  double discount = 1.0;
  const double volume = world.unit_volumes.at(product);
  while (state.week < end_week) {
    const std::size_t t = state.week;
    forecast_vars.clear();
    if (prices != nullptr) {
      for (double v : prices->forecast(t)) forecast_vars.push_back(tape.leaf(v));
    }
    PolicyInput<ad::Var> in{world, product, t, state, actions, forecast_vars};
    BasicAction<ad::Var> a = policy(in);
    check_action(a.qty_jit.value(), a.qty_llt.value(), t);
    std::optional<ad::Var> lambda;
    if (prices != nullptr) lambda = forecast_vars.front();
    auto o = advance(state, world.at(product, t), a, lambda, volume);
    discounted.push_back(o.reward * discount);
    discount *= world.discount_factor;
    if (outcomes != nullptr) outcomes->push_back(o);
    actions.push_back(a);
  }
  return ad::sum(discounted);
}

double network_volume(std::span<const double> onhand,
                      std::span<const double> unit_volumes) {
  if (onhand.size() != unit_volumes.size()) {
    throw DomainError("network_volume: length mismatch");
  }
  return kernels::dot(onhand, unit_volumes);
}

double network_volume(std::span<const SimState> states,
                      std::span<const double> unit_volumes) {
  if (states.size() != unit_volumes.size()) {
    throw DomainError("network_volume: length mismatch");
  }
  double v = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    v += unit_volumes[i] * states[i].onhand;
  }
  return v;
}

}  // namespace dualsrc
