#include "dualsrc/coordinator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "dualsrc/blob.hpp"
#include "dualsrc/errors.hpp"

namespace dualsrc {

namespace {

constexpr double kRatioCap = 10.0;

double capacity_at(std::span<const double> k, std::size_t week) {
  if (k.empty()) return std::numeric_limits<double>::infinity();
  return k[std::min(week, k.size() - 1)];
}

std::size_t weeks_to_holiday(const std::vector<std::size_t>& holidays,
                             std::size_t week) {
  std::size_t best = kSeasonPeriod;
  const std::size_t woy = week % kSeasonPeriod;
  for (std::size_t h : holidays) {
    const std::size_t d = (h + kSeasonPeriod - woy) % kSeasonPeriod;
    best = std::min(best, d);
  }
  return best;
}

}  // namespace

std::size_t CoordSpec::feature_count() const {
  return 15 + kCoordPriceLags + 2 * slots();
}

double default_price_scale(const ExoWorld& w) {
  std::vector<double> r;
  for (std::size_t i = 0; i < w.num_products; ++i) {
    r.push_back(w.at(i, 0).price / w.unit_volumes[i]);
  }
  if (r.empty()) return 1.0;
  std::nth_element(r.begin(), r.begin() + static_cast<long>(r.size() / 2), r.end());
  return 0.05 * r[r.size() / 2];
}

std::vector<std::string> coord_feature_names(const CoordSpec& spec) {
  std::vector<std::string> n = {
      "bias",          "onhand_vol",      "inflight_lead_vol", "inflight_vol",
      "jit_order_vol", "llt_order_vol",   "demand_vol",        "mean_demand_vol",
      "lead_demand_vol", "projected_vol", "holiday_distance",  "season_sin",
      "season_cos",    "cost_ratio",      "holding_ratio"};
  for (std::size_t k = 1; k <= kCoordPriceLags; ++k) n.push_back("price_lag_" + std::to_string(k));
  for (std::size_t k = 0; k < spec.slots(); ++k) n.push_back("prev_forecast_" + std::to_string(k));
  for (std::size_t k = 0; k < spec.slots(); ++k) n.push_back("capacity_ratio_" + std::to_string(k));
  return n;
}

std::vector<double> coord_featurize(const CoordSpec& spec, const CoordInput& in) {
  const ExoWorld& w = in.world;
  const std::size_t t = in.week;
  if (in.states.size() != in.products.size() ||
      (!in.last_actions.empty() && in.last_actions.size() != in.products.size())) {
    throw DomainError("coord_featurize: population arrays are not aligned");
  }
  double onhand = 0, inflight_lead = 0, inflight = 0, jit = 0, llt = 0;
  double demand = 0, mean_demand = 0, lead_demand = 0, projected = 0;
  double rev = 0, cost = 0, hold = 0;
  const double lead = static_cast<double>(w.lead_jit + 1);
  for (std::size_t k = 0; k < in.products.size(); ++k) {
    const std::size_t i = in.products[k];
    const SimState& s = in.states[k];
    const double v = w.unit_volumes.at(i);
    const double within = inflight_within(s, w.lead_jit);
    const double m = trailing_mean_demand(w, i, t);
    onhand += v * s.onhand;
    inflight_lead += v * within;
    inflight += v * (s.pipeline_jit.total_value() + s.pipeline_llt.total_value());
    if (!in.last_actions.empty()) {
      jit += v * in.last_actions[k].qty_jit;
      llt += v * in.last_actions[k].qty_llt;
    }
    if (t > 0) demand += v * w.at(i, t - 1).demand;
    mean_demand += v * m;
    lead_demand += v * m * lead;
    projected += v * std::max(0.0, s.onhand + within - m * lead);
    const ExoProductWeek& e = w.at(i, t);
    rev += m * e.price;
    cost += m * e.cost_jit;
    hold += m * e.holding_cost;
  }
  const double kt = capacity_at(in.capacity, t);
  if (!(kt > 0.0)) throw DomainError("coord_featurize: capacity must be > 0");
  const double kinv = std::isfinite(kt) ? 1.0 / kt : 0.0;
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(t % kSeasonPeriod) /
                       static_cast<double>(kSeasonPeriod);
  std::vector<double> f = {1.0,
                           onhand * kinv,
                           inflight_lead * kinv,
                           inflight * kinv,
                           jit * kinv,
                           llt * kinv,
                           demand * kinv,
                           mean_demand * kinv,
                           lead_demand * kinv,
                           projected * kinv,
                           static_cast<double>(weeks_to_holiday(spec.holiday_weeks, t)) /
                               static_cast<double>(kSeasonPeriod),
                           std::sin(angle),
                           std::cos(angle),
                           rev > 0 ? cost / rev : 0.0,
                           rev > 0 ? hold / rev : 0.0};
  const double pinv = 1.0 / spec.price_scale;
  const std::size_t np = in.past_prices.size();
  for (std::size_t k = 1; k <= kCoordPriceLags; ++k) {
    f.push_back(k <= np ? in.past_prices[np - k] * pinv : 0.0);
  }
  for (std::size_t k = 0; k < spec.slots(); ++k) {
    if (in.last_forecast.empty()) {
      f.push_back(0.0);
    } else {
      // Last week's forecast, shifted to start at this week.
      const std::size_t j = std::min(k + 1, in.last_forecast.size() - 1);
      f.push_back(in.last_forecast[j] * pinv);
    }
  }
  for (std::size_t k = 0; k < spec.slots(); ++k) {
    const double kk = capacity_at(in.capacity, t + k);
    double r;
    if (!std::isfinite(kt)) {
      r = std::isfinite(kk) ? 0.0 : 1.0;
    } else {
      r = std::min(kk / kt, kRatioCap);
    }
    f.push_back(r);
  }
  for (double x : f) {
    if (!std::isfinite(x)) throw DomainError("coord_featurize: non-finite feature at week " + std::to_string(t));
  }
  return f;
}

CoordParams make_coord_params(const CoordSpec& spec,
                              std::vector<std::size_t> hidden,
                              std::uint64_t seed) {
  CoordParams p;
  p.spec = spec;
  std::vector<std::size_t> sizes = {spec.feature_count()};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(spec.slots());
  p.net = mlp_init(sizes, Activation::kTanh, seed);
  return p;
}

std::vector<double> forecast_prices(const CoordParams& p,
                                    std::span<const double> features) {
  if (features.size() != p.net.input_size()) throw DomainError("forecast_prices: feature length mismatch");
  std::vector<double> z = mlp_forward(p.net, features);
  for (double& x : z) x = ad::softplus(x) * p.spec.price_scale;
  return z;
}

std::vector<ad::Var> forecast_prices(const CoordParams& p,
                                     std::span<const double> features,
                                     std::span<const ad::Var> weights,
                                     ad::Tape& tape) {
  if (features.size() != p.net.input_size()) throw DomainError("forecast_prices: feature length mismatch");
  const std::vector<ad::Var> x = tape.leaves(features);
  std::vector<ad::Var> z = weights.empty()
                               ? mlp_forward(p.net, std::span<const double>(p.net.flat), x)
                               : mlp_forward(p.net, weights, x);
  for (ad::Var& v : z) v = ad::softplus(v) * p.spec.price_scale;
  return z;
}

void save_coordinator(const std::filesystem::path& path, const CoordParams& p,
                      const nlohmann::json& extra) {
  nlohmann::json h;
  h["format"] = "dualsrc-coordinator";
  h["version"] = 1;
  h["sizes"] = p.net.sizes;
  h["activation"] = std::string(activation_name(p.net.activation));
  h["seed"] = p.net.seed;
  h["horizon"] = p.spec.horizon;
  h["price_scale"] = p.spec.price_scale;
  h["holiday_weeks"] = p.spec.holiday_weeks;
  h["extra"] = extra;
  write_blob(path, "DSCP", h, p.net.flat);
}

CoordParams load_coordinator(const std::filesystem::path& path,
                             nlohmann::json* extra) {
  Blob b = read_blob(path, "DSCP");
  const auto& h = b.header;
  if (h.value("version", 0) != 1) throw VersionError("unsupported coordinator file version");
  CoordParams p;
  try {
    p.spec.horizon = h.at("horizon").get<std::size_t>();
    p.spec.price_scale = h.at("price_scale").get<double>();
    p.spec.holiday_weeks = h.at("holiday_weeks").get<std::vector<std::size_t>>();
    p.net.sizes = h.at("sizes").get<std::vector<std::size_t>>();
    p.net.activation = parse_activation(h.at("activation").get<std::string>());
    p.net.seed = h.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("coordinator header: ") + e.what(), 0);
  }
  if (b.data.size() != mlp_param_count(p.net.sizes) ||
      p.net.input_size() != p.spec.feature_count() || p.net.output_size() != p.spec.slots()) {
    throw ParseError("coordinator file: layout disagrees with header", 0);
  }
  p.net.flat = std::move(b.data);
  if (extra != nullptr) *extra = h.value("extra", nlohmann::json::object());
  return p;
}

// ---------------------------------------------------------------------------

template <class S>
S p3_loss(std::span<const S> volumes, std::span<const double> capacity,
          const std::vector<std::vector<S>>& forecasts, const P3Weights& w) {
  const std::size_t n = volumes.size();
  if (capacity.size() != n || (!forecasts.empty() && forecasts.size() != n)) {
    throw DomainError("p3_loss: volumes, capacity and forecasts must align");
  }
  if (!(w.price_unit > 0.0)) throw DomainError("p3_loss: price unit must be > 0");
  using ad::max0;
  using ad::square;
  const double pu = 1.0 / w.price_unit;
  std::vector<S> terms;
  for (std::size_t t = 0; t < n; ++t) {
    const double k = capacity[t];
    if (!(k > 0.0)) throw DomainError("p3_loss: capacity must be > 0");
    if (std::isfinite(k)) {
      const S excess = w.relative ? max0(volumes[t] * (1.0 / k) - 1.0) : max0(volumes[t] - k);
      terms.push_back(square(excess) * w.violation);
    }
    if (forecasts.empty()) continue;
    const auto& f = forecasts[t];
    for (const S& x : f) terms.push_back(x * (w.price * pu));
    if (f.empty()) continue;
    for (std::size_t s = 1; s <= t; ++s) {
      const auto& past = forecasts[t - s];
      if (s >= past.size()) break;
      terms.push_back(square((f[0] - past[s]) * pu) * w.consistency);
    }
  }
  if (terms.empty()) {
    if constexpr (std::is_same_v<S, double>) {
      return 0.0;
    } else {
      if (volumes.empty()) throw DomainError("p3_loss: empty trajectory");
      return volumes[0] * 0.0;
    }
  }
  return ad::sum(std::span<const S>(terms));
}

template double p3_loss(std::span<const double>, std::span<const double>,
                        const std::vector<std::vector<double>>&, const P3Weights&);
template ad::Var p3_loss(std::span<const ad::Var>, std::span<const double>,
                         const std::vector<std::vector<ad::Var>>&, const P3Weights&);

// ---------------------------------------------------------------------------

namespace {

// Distance from the stopping rule; 0 means converged.
double mpc_gap(std::span<const double> v, std::span<const double> k,
               std::span<const double> lambda, const MpcConfig& cfg) {
  double gap = 0.0;
  for (std::size_t s = 0; s < v.size(); ++s) {
    if (!std::isfinite(k[s])) continue;
    const double r = v[s] / k[s];
    gap = std::max(gap, r - 1.0 - cfg.tol);
    if (lambda[s] > 0.0) gap = std::max(gap, (1.0 - cfg.slack) - r);
  }
  return std::max(gap, 0.0);
}

}  // namespace

MpcResult mpc_dual_search(const VolumeSimulator& simulate,
                          std::span<const double> capacity,
                          const MpcConfig& cfg,
                          std::span<const double> warm_start) {
  const std::size_t n = capacity.size();
  MpcResult r;
  r.lambda.assign(n, 0.0);
  if (!warm_start.empty()) {
    for (std::size_t s = 0; s < n && s < warm_start.size(); ++s) r.lambda[s] = std::max(0.0, warm_start[s]);
  }
  double ksum = 0.0;
  std::size_t kn = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (!(capacity[s] > 0.0)) throw DomainError("mpc_dual_search: capacity must be > 0");
    if (std::isfinite(capacity[s])) {
      ksum += capacity[s];
      ++kn;
    } else {
      r.lambda[s] = 0.0;
    }
  }
  if (kn == 0) {
    r.lambda.assign(n, 0.0);
    r.volumes = simulate(r.lambda);
    r.converged = true;
    return r;
  }
  const double eta = cfg.step * cfg.price_unit / (ksum / static_cast<double>(kn));
  std::vector<double> lambda = r.lambda;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    std::vector<double> v = simulate(lambda);
    if (v.size() < n) throw DomainError("mpc_dual_search: simulator returned too few weeks");
    r.iterations = it + 1;
    const double gap = mpc_gap(v, capacity, lambda, cfg);
    if (gap <= best_gap) {  // ties: later iterates sit closer to the dual optimum
      best_gap = gap;
      r.lambda = lambda;
      r.volumes = v;
    }
    if (gap == 0.0) {
      r.converged = true;
      return r;
    }
    const double step = cfg.diminishing ? eta / std::sqrt(static_cast<double>(it + 1)) : eta;
    for (std::size_t s = 0; s < n; ++s) {
      if (!std::isfinite(capacity[s])) continue;
      lambda[s] = std::max(0.0, lambda[s] + step * (v[s] - capacity[s]));
    }
  }
  r.hit_cap = true;
  return r;
}

// ---------------------------------------------------------------------------

PlanningWorld::PlanningWorld(const ExoWorld& actual) : actual_(actual), plan_(actual) {}

void PlanningWorld::plan_from(std::size_t week, std::size_t horizon) {
  for (std::size_t i = 0; i < plan_.num_products; ++i) {
    for (std::size_t u = planned_from_; u < planned_to_; ++u) plan_.weeks[i][u] = actual_.weeks[i][u];
  }
  planned_from_ = week;
  planned_to_ = std::min(actual_.horizon, week + horizon + 1);
  const bool has_profiles = actual_.profiles.size() == actual_.num_products;
  for (std::size_t i = 0; i < plan_.num_products; ++i) {
    const double mean = trailing_mean_demand(actual_, i, week);
    const ExoProductWeek& now = actual_.weeks[i][week];
    for (std::size_t u = planned_from_; u < planned_to_; ++u) {
      ExoProductWeek& e = plan_.weeks[i][u];
      e = now;
      e.demand = mean;
      if (has_profiles) {
        const ProductProfile& p = actual_.profiles[i];
        e.arrival_shares_jit = p.mean_shares_jit;
        e.arrival_shares_llt = p.mean_shares_llt;
        e.supply_cap_jit = p.mean_cap_jit;
        e.supply_cap_llt = p.mean_cap_llt;
      }
    }
  }
}

std::vector<double> simulate_population_volumes(
    const ExoWorld& plan, std::span<const std::size_t> products,
    std::span<const SimState> states,
    std::span<const std::vector<Action>> histories, const PolicyParams& policy,
    std::size_t week, std::span<const double> lambda) {
  const std::size_t len = std::min(lambda.size(), plan.horizon - week);
  std::vector<double> vol(lambda.size(), 0.0);
  const std::size_t slots = policy.features.price_slots;
  std::vector<double> forecast(slots, 0.0);
  for (std::size_t k = 0; k < products.size(); ++k) {
    const std::size_t i = products[k];
    SimState s = states[k];
    std::vector<Action> hist = histories[k];
    const double v = plan.unit_volumes[i];
    for (std::size_t d = 0; d < len; ++d) {
      const std::size_t u = week + d;
      for (std::size_t j = 0; j < slots; ++j) {
        forecast[j] = lambda[std::min(d + j, lambda.size() - 1)];
      }
      PolicyInput<double> in{plan, i, u, s, hist, forecast};
      const Action a = rl_order(policy, in);
      advance(s, plan.at(i, u), a, std::optional<double>(), v);
      hist.push_back(a);
      vol[d] += v * s.onhand;
    }
  }
  return vol;
}

void export_price_paths(const std::filesystem::path& path,
                        std::size_t first_week,
                        const std::vector<std::vector<double>>& forecasts) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(17);
  os << "week,offset,lambda\n";
  for (std::size_t t = 0; t < forecasts.size(); ++t) {
    for (std::size_t k = 0; k < forecasts[t].size(); ++k) {
      os << first_week + t << ',' << k << ',' << forecasts[t][k] << '\n';
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace dualsrc
