#include "dualsrc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dualsrc/blob.hpp"
#include "dualsrc/datagen.hpp"
#include "dualsrc/errors.hpp"
#include "dualsrc/kernels.hpp"
#include "dualsrc/parallel.hpp"
#include "dualsrc/simulator.hpp"

namespace dualsrc {

#define DUALSRC_TRAIN_FIELDS(X)                                               \
  X(batch_size) X(step_size) X(max_batches) X(train_weeks) X(start_week)      \
  X(seed) X(adam_beta1) X(adam_beta2) X(adam_eps) X(grad_clip)                \
  X(deterministic) X(threads) X(conv_window) X(conv_patience) X(conv_tol)     \
  X(resample_paths) X(priced) X(price_rel_max) X(price_zero_prob)             \
  X(price_block) X(hidden) X(activation) X(mask_llt) X(coord_products)        \
  X(coord_hidden) X(coord_price_scale) X(violation_weight) X(price_weight)    \
  X(consistency_weight) X(capacity_frac_low) X(capacity_frac_high)            \
  X(capacity_block) X(coord_burn_in) X(coord_infinite_capacity)         \
  X(checkpoint_every)

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json::object();
#define X(f) j[#f] = c.f;
  DUALSRC_TRAIN_FIELDS(X)
#undef X
  j["optimizer"] = c.optimizer == OptimizerKind::kAdam ? "adam" : "sgd";
  j["checkpoint_path"] = c.checkpoint_path.string();
  j["log_path"] = c.log_path.string();
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
#define X(f)           \
  if (key == #f) {     \
    value.get_to(c.f); \
    known = true;      \
  }
    DUALSRC_TRAIN_FIELDS(X)
#undef X
    if (key == "optimizer") {
      const auto name = value.get<std::string>();
      if (name == "adam") {
        c.optimizer = OptimizerKind::kAdam;
      } else if (name == "sgd") {
        c.optimizer = OptimizerKind::kSgd;
      } else {
        throw DomainError("unknown optimizer '" + name + "'");
      }
      known = true;
    } else if (key == "checkpoint_path") {
      c.checkpoint_path = value.get<std::string>();
      known = true;
    } else if (key == "log_path") {
      c.log_path = value.get<std::string>();
      known = true;
    }
    if (!known) throw DomainError("unknown training option '" + key + "'");
  }
}

#undef DUALSRC_TRAIN_FIELDS

void validate_config(const TrainConfig& c, const ExoWorld& w) {
  if (c.batch_size < 1) throw DomainError("batch_size must be >= 1");
  if (!(c.step_size >= 0.0)) throw DomainError("step_size must be >= 0");
  if (c.train_weeks < 1 || c.start_week + c.train_weeks > w.horizon) {
    throw DomainError("train window [" + std::to_string(c.start_week) + ", " +
                      std::to_string(c.start_week + c.train_weeks) +
                      ") exceeds world horizon " + std::to_string(w.horizon));
  }
  if (w.num_products == 0) throw DomainError("world has no products");
  if (c.price_block < 1 || c.capacity_block < 1) throw DomainError("block lengths must be >= 1");
  if (c.capacity_frac_low <= 0.0 || c.capacity_frac_high < c.capacity_frac_low) {
    throw DomainError("capacity fraction range invalid");
  }
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const TrainState& s) {
  nlohmann::json h;
  h["format"] = "dualsrc-checkpoint";
  h["version"] = 1;
  h["kind"] = s.kind;
  h["step"] = s.step;
  h["epoch"] = s.epoch;
  h["epoch_pos"] = s.epoch_pos;
  h["perm"] = s.perm;
  h["rng"] = s.rng_state;
  h["converged"] = s.converged;
  h["count"] = s.params.size();
  h["meta"] = s.meta;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& b : s.history) hist.push_back({b.batch, b.objective, b.grad_norm, b.wall_time});
  h["history"] = hist;
  std::vector<double> data;
  data.reserve(3 * s.params.size());
  data.insert(data.end(), s.params.begin(), s.params.end());
  data.insert(data.end(), s.adam_m.begin(), s.adam_m.end());
  data.insert(data.end(), s.adam_v.begin(), s.adam_v.end());
  write_blob(path, "DSCK", h, data);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  Blob b = read_blob(path, "DSCK");
  const auto& h = b.header;
  if (h.value("version", 0) != 1) throw VersionError("unsupported checkpoint version");
  TrainState s;
  try {
    s.kind = h.at("kind").get<std::string>();
    s.step = h.at("step").get<std::size_t>();
    s.epoch = h.at("epoch").get<std::size_t>();
    s.epoch_pos = h.at("epoch_pos").get<std::size_t>();
    s.perm = h.at("perm").get<std::vector<std::size_t>>();
    s.rng_state = h.at("rng").get<std::string>();
    s.converged = h.at("converged").get<bool>();
    s.meta = h.at("meta");
    for (const auto& row : h.at("history")) {
      s.history.push_back({row.at(0).get<std::size_t>(), row.at(1).get<double>(),
                           row.at(2).get<double>(), row.at(3).get<double>()});
    }
    const auto n = h.at("count").get<std::size_t>();
    if (b.data.size() != 3 * n) throw ParseError("checkpoint: data length mismatch", 0);
    s.params.assign(b.data.begin(), b.data.begin() + static_cast<long>(n));
    s.adam_m.assign(b.data.begin() + static_cast<long>(n), b.data.begin() + static_cast<long>(2 * n));
    s.adam_v.assign(b.data.begin() + static_cast<long>(2 * n), b.data.end());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what(), 0);
  }
  return s;
}

void write_train_log(const std::filesystem::path& path,
                     const std::vector<BatchLog>& history) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(17);
  os << "batch,objective,grad_norm,wall_time\n";
  for (const auto& b : history) {
    os << b.batch << ',' << b.objective << ',' << b.grad_norm << ',' << b.wall_time << '\n';
  }
}

bool has_converged(const std::vector<BatchLog>& history, const TrainConfig& cfg,
                   bool maximize) {
  const std::size_t w = cfg.conv_window;
  const std::size_t p = cfg.conv_patience;
  const std::size_t n = history.size();
  if (w == 0 || n < w + p) return false;
  auto ma = [&](std::size_t end) {
    double s = 0.0;
    for (std::size_t k = end - w; k < end; ++k) s += history[k].objective;
    return s / static_cast<double>(w);
  };
  const double now = ma(n);
  const double then = ma(n - p);
  const double gain = maximize ? now - then : then - now;
  return gain < cfg.conv_tol * std::abs(then);
}

std::vector<double> sample_price_path(const ExoWorld& w, std::size_t product,
                                      std::size_t weeks, const TrainConfig& cfg,
                                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double unit = w.at(product, 0).price / w.unit_volumes.at(product);
  std::vector<double> path(weeks, 0.0);
  for (std::size_t t = 0; t < weeks; t += cfg.price_block) {
    const double z = u01(rng);
    const double r = u01(rng);
    const double level = z < cfg.price_zero_prob ? 0.0 : r * cfg.price_rel_max * unit;
    for (std::size_t k = t; k < std::min(weeks, t + cfg.price_block); ++k) path[k] = level;
  }
  return path;
}

PolicyParams initial_buy_policy(const ExoWorld& w, const TrainConfig& cfg) {
  const std::size_t slots = cfg.priced ? w.lead_llt + 1 : 0;
  return make_policy_params(default_feature_spec(w, slots), cfg.hidden,
                            parse_activation(cfg.activation),
                            derive_seed(cfg.seed, 0xB0B), cfg.mask_llt);
}

double buy_batch_objective(const ExoWorld& world, const PolicyParams& policy,
                           std::span<const std::size_t> products,
                           const std::vector<std::vector<double>>* prices,
                           std::size_t start_week, std::size_t weeks,
                           std::vector<double>* grad, std::size_t threads) {
  const std::size_t n = policy.param_count();
  const std::vector<double> flat = policy.flat();
  const std::size_t lookahead = policy.features.price_slots > 0 ? policy.features.price_slots - 1 : 0;
  std::vector<double> objectives(products.size(), 0.0);
  std::vector<std::vector<double>> grads(grad != nullptr ? products.size() : 0);
  parallel_for(products.size(), threads, [&](std::size_t k) {
    const std::size_t i = products[k];
    ad::Tape tape;
    tape.reserve(weeks * 4000, weeks * 8000);
    BoundParams bound = bind_params(tape, flat);
    const std::span<const ad::Var> pv(bound.vars);
    OrderPolicy<ad::Var> pol = [&](const PolicyInput<ad::Var>& in) {
      return rl_order(policy, in, pv);
    };
    PricePlan plan;
    const PricePlan* planp = nullptr;
    if (prices != nullptr) {
      plan.lambda.assign(start_week, 0.0);
      const auto& path = (*prices)[k];
      plan.lambda.insert(plan.lambda.end(), path.begin(), path.end());
      plan.lookahead = lookahead;
      planp = &plan;
    }
    const ad::Var obj = rollout_tape(world, i, pol, planp, tape,
                                     initial_state(world, i, start_week),
                                     start_week + weeks);
    objectives[k] = obj.value();
    if (grad != nullptr) {
      tape.backward(obj);
      grads[k].resize(n);
      tape.copy_adjoints(bound.first, grads[k]);
    }
  });
  double total = 0.0;
  for (double o : objectives) total += o;
  if (grad != nullptr) {
    grad->assign(n, 0.0);
    for (const auto& g : grads) kernels::axpy(1.0, g, *grad);
  }
  return total;
}

void optimizer_step(TrainState& s, const TrainConfig& cfg,
                    std::span<const double> grad, double sign) {
  const std::size_t n = s.params.size();
  if (s.adam_m.size() != n) s.adam_m.assign(n, 0.0);
  if (s.adam_v.size() != n) s.adam_v.assign(n, 0.0);
  if (cfg.optimizer == OptimizerKind::kSgd) {
    kernels::axpy(sign * cfg.step_size, grad, s.params);
    return;
  }
  const double t = static_cast<double>(s.step + 1);
  kernels::adam_update(s.params, grad, s.adam_m, s.adam_v, cfg.step_size,
                       cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
                       1.0 - std::pow(cfg.adam_beta1, t),
                       1.0 - std::pow(cfg.adam_beta2, t), sign);
}

namespace {

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw ParseError("checkpoint: bad RNG state", 0);
  return rng;
}

double clip_gradient(std::vector<double>& g, double max_norm) {
  const double norm = std::sqrt(kernels::dot(g, g));
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (double& x : g) x *= f;
  }
  return norm;
}

}  // namespace

// Draws the next M products, reshuffling at epoch boundaries.
static std::vector<std::size_t> next_batch(TrainState& s, std::size_t num_products,
                                    std::size_t m, std::mt19937_64& rng,
                                    bool* new_epoch) {
  std::vector<std::size_t> out;
  *new_epoch = false;
  while (out.size() < m) {
    if (s.perm.size() != num_products || s.epoch_pos >= s.perm.size()) {
      if (s.perm.size() == num_products) {
        ++s.epoch;
        *new_epoch = true;
      }
      s.perm.resize(num_products);
      std::iota(s.perm.begin(), s.perm.end(), 0);
      std::shuffle(s.perm.begin(), s.perm.end(), rng);
      s.epoch_pos = 0;
    }
    out.push_back(s.perm[s.epoch_pos++]);
    if (out.size() == num_products) break;
  }
  return out;
}

BuyTrainResult train_buy_policy(const ExoWorld& world, const TrainConfig& cfg,
                                const PolicyParams& init,
                                const WorldSource* source,
                                const TrainState* resume) {
  validate_config(cfg, world);
  if (init.features.num_products != world.num_products) {
    throw DomainError("policy embedding size does not match world");
  }
  if (cfg.priced && init.features.price_slots == 0) {
    throw DomainError("priced training needs a policy with price features");
  }
  BuyTrainResult result;
  result.policy = init;
  TrainState& s = result.state;
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x7EA1));
  if (resume != nullptr) {
    s = *resume;
    if (s.kind != "buy" || s.params.size() != init.param_count()) {
      throw DomainError("checkpoint does not match this policy");
    }
    rng = rng_from_string(s.rng_state);
    result.policy.set_flat(s.params);
  } else {
    s.kind = "buy";
    s.params = init.flat();
  }

  std::shared_ptr<const ExoWorld> current;
  std::size_t current_epoch = static_cast<std::size_t>(-1);
  auto world_for = [&](std::size_t epoch) -> const ExoWorld& {
    if (!cfg.resample_paths || source == nullptr || epoch == 0) return world;
    if (epoch != current_epoch) {
      current = (*source)(epoch);
      current_epoch = epoch;
    }
    return *current;
  };

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> grad;
  while (s.step < cfg.max_batches && !s.converged) {
    bool new_epoch = false;
    const std::vector<std::size_t> products =
        next_batch(s, world.num_products, cfg.batch_size, rng, &new_epoch);
    const ExoWorld& w = world_for(s.epoch);
    std::vector<std::vector<double>> prices;
    if (cfg.priced) {
      for (std::size_t i : products) prices.push_back(sample_price_path(w, i, cfg.train_weeks, cfg, rng));
    }
    result.policy.set_flat(s.params);
    const double obj = buy_batch_objective(w, result.policy, products,
                                           cfg.priced ? &prices : nullptr,
                                           cfg.start_week, cfg.train_weeks,
                                           &grad, cfg.threads);
    const double norm = clip_gradient(grad, cfg.grad_clip);
    if (!std::isfinite(obj) || !std::isfinite(norm)) {
      s.rng_state = rng_to_string(rng);
      if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, s);
      throw NumericError("training objective became non-finite at batch " +
                             std::to_string(s.step),
                         0);
    }
    optimizer_step(s, cfg, grad, +1.0);
    ++s.step;
    const double wall =
        cfg.deterministic
            ? 0.0
            : std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    s.history.push_back({s.step, obj, norm, wall});
    s.converged = has_converged(s.history, cfg, true);
    s.rng_state = rng_to_string(rng);
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
        s.step % cfg.checkpoint_every == 0) {
      save_checkpoint(cfg.checkpoint_path, s);
    }
  }
  s.rng_state = rng_to_string(rng);
  result.policy.set_flat(s.params);
  if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, s);
  if (!cfg.log_path.empty()) write_train_log(cfg.log_path, s.history);
  return result;
}

// ---------------------------------------------------------------------------
// Coordinator.

std::vector<std::vector<double>> sample_capacity_paths(
    std::span<const double> reference_volumes, std::size_t length,
    std::size_t count, std::uint64_t seed, double lo, double hi,
    std::size_t block) {
  if (count < 1) throw DomainError("sample_capacity_paths: count must be >= 1");
  if (block < 1 || !(lo > 0.0) || hi < lo) throw DomainError("sample_capacity_paths: bad fraction range");
  double peak = 0.0;
  for (double v : reference_volumes) peak = std::max(peak, v);
  if (!(peak > 0.0)) throw DomainError("sample_capacity_paths: reference volume is zero");
  std::mt19937_64 rng(derive_seed(seed, 0xCA9));
  std::uniform_real_distribution<double> frac(lo, hi);
  std::vector<std::vector<double>> paths(count, std::vector<double>(length));
  for (auto& path : paths) {
    for (std::size_t t = 0; t < length; t += block) {
      const double k = frac(rng) * peak;
      for (std::size_t u = t; u < std::min(length, t + block); ++u) path[u] = k;
    }
  }
  return paths;
}

std::vector<double> unconstrained_volumes(const ExoWorld& w,
                                          const PolicyParams& policy,
                                          std::span<const std::size_t> products,
                                          std::vector<SimState>& states,
                                          std::vector<std::vector<Action>>& histories,
                                          std::size_t start, std::size_t end) {
  std::vector<double> vol(end - start, 0.0);
  const std::vector<double> zero(policy.features.price_slots, 0.0);
  for (std::size_t k = 0; k < products.size(); ++k) {
    const std::size_t i = products[k];
    const double v = w.unit_volumes[i];
    for (std::size_t t = start; t < end; ++t) {
      PolicyInput<double> in{w, i, t, states[k], histories[k], zero};
      const Action a = rl_order(policy, in);
      advance(states[k], w.at(i, t), a, std::optional<double>(), v);
      histories[k].push_back(a);
      vol[t - start] += v * states[k].onhand;
    }
  }
  return vol;
}

CoordParams initial_coordinator(const ExoWorld& w, const TrainConfig& cfg) {
  CoordSpec spec;
  spec.horizon = w.lead_llt;
  spec.price_scale = cfg.coord_price_scale > 0.0 ? cfg.coord_price_scale : default_price_scale(w);
  CoordParams p = make_coord_params(spec, cfg.coord_hidden, derive_seed(cfg.seed, 0xC00D));
  return p;
}

P3Weights training_weights(const TrainConfig& cfg, const CoordParams& p) {
  P3Weights w;
  w.violation = cfg.violation_weight;
  w.price = cfg.price_weight;
  w.consistency = cfg.consistency_weight;
  w.relative = true;
  w.price_unit = p.spec.price_scale;
  return w;
}

namespace {

SimState values_of(const BasicSimState<ad::Var>& s) {
  SimState out;
  out.onhand = s.onhand.value();
  out.pipeline_jit = Pipeline<double>(s.pipeline_jit.size(), 0.0);
  out.pipeline_llt = Pipeline<double>(s.pipeline_llt.size(), 0.0);
  for (std::size_t k = 0; k < s.pipeline_jit.size(); ++k) out.pipeline_jit.at(k) = s.pipeline_jit.at(k).value();
  for (std::size_t k = 0; k < s.pipeline_llt.size(); ++k) out.pipeline_llt.at(k) = s.pipeline_llt.at(k).value();
  out.week = s.week;
  return out;
}

// One coordinator batch on a fresh tape; returns the loss and its gradient.
double coord_batch(const ExoWorld& w, const PolicyParams& policy,
                   const CoordParams& coord, std::span<const std::size_t> products,
                   std::span<const double> capacity,  // by absolute week
                   std::size_t start, std::size_t end, const P3Weights& weights,
                   std::vector<double>* grad) {
  // Unconstrained burn-in to a realistic mid-stream state.
  std::vector<SimState> init;
  std::vector<std::vector<Action>> hist(products.size());
  for (std::size_t i : products) init.push_back(initial_state(w, i, 0));
  if (start > 0) unconstrained_volumes(w, policy, products, init, hist, 0, start);

  ad::Tape tape;
  tape.reserve(products.size() * (end - start) * 300, products.size() * (end - start) * 4000);
  const BoundParams bound = bind_params(tape, coord.net.flat);
  std::vector<BasicSimState<ad::Var>> states;
  std::vector<std::vector<BasicAction<ad::Var>>> actions(products.size());
  for (std::size_t k = 0; k < products.size(); ++k) {
    states.push_back(lift_state(init[k], tape));
    for (const Action& a : hist[k]) actions[k].push_back({tape.leaf(a.qty_jit), tape.leaf(a.qty_llt)});
  }
  std::vector<double> vols(products.size());
  for (std::size_t k = 0; k < products.size(); ++k) vols[k] = w.unit_volumes[products[k]];

  std::vector<ad::Var> volumes;
  std::vector<std::vector<ad::Var>> forecasts;
  std::vector<double> applied;
  std::vector<double> last_forecast;
  std::vector<SimState> snap(products.size());
  std::vector<Action> last(products.size());
  std::vector<ad::Var> onhand(products.size());
  for (std::size_t t = start; t < end; ++t) {
    for (std::size_t k = 0; k < products.size(); ++k) {
      snap[k] = values_of(states[k]);
      if (!actions[k].empty()) {
        last[k] = {actions[k].back().qty_jit.value(), actions[k].back().qty_llt.value()};
      }
    }
    CoordInput ci{w, products, snap, t > 0 ? std::span<const Action>(last) : std::span<const Action>(),
                  t, capacity, applied, last_forecast};
    const std::vector<double> feats = coord_featurize(coord.spec, ci);
    std::vector<ad::Var> f = forecast_prices(coord, feats, bound.vars, tape);
    for (std::size_t k = 0; k < products.size(); ++k) {
      const std::size_t i = products[k];
      PolicyInput<ad::Var> in{w, i, t, states[k], actions[k], f};
      const BasicAction<ad::Var> a = rl_order(policy, in, {});
      advance(states[k], w.at(i, t), a, std::optional<ad::Var>(), vols[k]);
      actions[k].push_back(a);
      onhand[k] = states[k].onhand;
    }
    volumes.push_back(ad::dot(std::span<const double>(vols), std::span<const ad::Var>(onhand)));
    applied.push_back(f[0].value());
    last_forecast.clear();
    for (const ad::Var& x : f) last_forecast.push_back(x.value());
    forecasts.push_back(std::move(f));
  }
  const ad::Var loss = p3_loss(std::span<const ad::Var>(volumes),
                               capacity.subspan(start, end - start), forecasts, weights);
  if (grad != nullptr) {
    tape.backward(loss);
    grad->assign(coord.net.flat.size(), 0.0);
    tape.copy_adjoints(bound.first, *grad);
  }
  return loss.value();
}

}  // namespace

CoordTrainResult train_coordinator(const ExoWorld& world,
                                   const PolicyParams& buy_policy,
                                   const TrainConfig& cfg,
                                   const CoordParams& init,
                                   const WorldSource* source,
                                   const TrainState* resume) {
  validate_config(cfg, world);
  if (buy_policy.features.price_slots != init.spec.slots()) {
    throw DomainError("buy policy price slots (" + std::to_string(buy_policy.features.price_slots) +
                      ") do not match coordinator horizon (" + std::to_string(init.spec.slots()) + ")");
  }
  if (cfg.coord_burn_in >= cfg.start_week + cfg.train_weeks) {
    throw DomainError("coordinator burn-in covers the whole training window");
  }
  CoordTrainResult result;
  result.coordinator = init;
  TrainState& s = result.state;
  std::mt19937_64 rng(derive_seed(cfg.seed, 0xC0A7));
  if (resume != nullptr) {
    s = *resume;
    if (s.kind != "coord" || s.params.size() != init.net.flat.size()) {
      throw DomainError("checkpoint does not match this coordinator");
    }
    rng = rng_from_string(s.rng_state);
  } else {
    s.kind = "coord";
    s.params = init.net.flat;
  }
  const P3Weights weights = training_weights(cfg, init);
  const std::size_t start = std::max(cfg.start_week, cfg.coord_burn_in);
  const std::size_t end = cfg.start_week + cfg.train_weeks;
  const std::size_t m = std::min(cfg.coord_products, world.num_products);

  std::shared_ptr<const ExoWorld> current;
  std::size_t current_epoch = static_cast<std::size_t>(-1);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> grad;
  while (s.step < cfg.max_batches && !s.converged) {
    bool new_epoch = false;
    std::vector<std::size_t> products = next_batch(s, world.num_products, m, rng, &new_epoch);
    std::sort(products.begin(), products.end());
    const ExoWorld* wp = &world;
    if (cfg.resample_paths && source != nullptr && s.epoch > 0) {
      if (s.epoch != current_epoch) {
        current = (*source)(s.epoch);
        current_epoch = s.epoch;
      }
      wp = current.get();
    }
    const ExoWorld& w = *wp;
    std::vector<double> capacity(w.horizon, std::numeric_limits<double>::infinity());
    const std::uint64_t path_seed = rng();
    if (!cfg.coord_infinite_capacity) {
      std::vector<SimState> st;
      std::vector<std::vector<Action>> hist(products.size());
      for (std::size_t i : products) st.push_back(initial_state(w, i, 0));
      const std::vector<double> ref = unconstrained_volumes(w, buy_policy, products, st, hist, 0, end);
      const auto paths = sample_capacity_paths(std::span<const double>(ref).subspan(start), end - start, 1,
                                               path_seed, cfg.capacity_frac_low,
                                               cfg.capacity_frac_high, cfg.capacity_block);
      std::copy(paths[0].begin(), paths[0].end(), capacity.begin() + static_cast<long>(start));
    }
    result.coordinator.net.flat = s.params;
    const double loss = coord_batch(w, buy_policy, result.coordinator, products, capacity,
                                    start, end, weights, &grad);
    const double norm = clip_gradient(grad, cfg.grad_clip);
    if (!std::isfinite(loss) || !std::isfinite(norm)) {
      s.rng_state = rng_to_string(rng);
      if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, s);
      throw NumericError("coordinator loss became non-finite at batch " + std::to_string(s.step), 0);
    }
    optimizer_step(s, cfg, grad, -1.0);
    ++s.step;
    const double wall =
        cfg.deterministic
            ? 0.0
            : std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    s.history.push_back({s.step, loss, norm, wall});
    s.converged = has_converged(s.history, cfg, false);
    s.rng_state = rng_to_string(rng);
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
        s.step % cfg.checkpoint_every == 0) {
      save_checkpoint(cfg.checkpoint_path, s);
    }
  }
  s.rng_state = rng_to_string(rng);
  result.coordinator.net.flat = s.params;
  if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, s);
  if (!cfg.log_path.empty()) write_train_log(cfg.log_path, s.history);
  return result;
}

}  // namespace dualsrc
