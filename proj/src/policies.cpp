#include "dualsrc/policies.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dualsrc/blob.hpp"
#include "dualsrc/errors.hpp"

namespace dualsrc {

namespace {

std::size_t window_begin(std::size_t week, std::size_t window) {
  return week > window ? week - window : 0;
}

}  // namespace

double trailing_mean_demand(const ExoWorld& w, std::size_t product,
                            std::size_t week, std::size_t window) {
  const std::size_t b = window_begin(week, window);
  if (b == week) return 0.0;
  double s = 0.0;
  for (std::size_t t = b; t < week; ++t) s += w.at(product, t).demand;
  return s / static_cast<double>(week - b);
}

double trailing_std_demand(const ExoWorld& w, std::size_t product,
                           std::size_t week, std::size_t window) {
  const std::size_t b = window_begin(week, window);
  if (week - b < 2) return 0.0;
  const double m = trailing_mean_demand(w, product, week, window);
  double ss = 0.0;
  for (std::size_t t = b; t < week; ++t) ss += ad::square(w.at(product, t).demand - m);
  return std::sqrt(ss / static_cast<double>(week - b));
}

HorizonTip horizon_tip(const ExoWorld& w, std::size_t product,
                       std::size_t week) {
  HorizonTip tip;
  tip.pred_lead = median_offset(w.at(product, week).arrival_shares_jit);
  tip.level = trailing_mean_demand(w, product, week) *
              static_cast<double>(tip.pred_lead + 1);
  return tip;
}

double tbs_llt_quantity(const ExoWorld& w, std::size_t product,
                        std::size_t week, const TbsConfig& cfg) {
  if (cfg.alpha < 0.0) throw DomainError("tbs: alpha must be >= 0");
  if (cfg.alpha == 0.0 || cfg.window == 0) return 0.0;
  // Sum over t-window+1 .. t-1 (window-1 terms), divided by window.
  double s = 0.0;
  for (std::size_t k = 1; k < cfg.window && k <= week; ++k) {
    s += w.at(product, week - k).demand;
  }
  return cfg.alpha * s / static_cast<double>(cfg.window);
}

OrderPolicy<double> make_tbs_policy(const TbsConfig& cfg) {
  return [cfg](const PolicyInput<double>& in) {
    return tbs_order(in.world, in.product, in.week, in.state, cfg);
  };
}

OrderPolicy<double> make_bsht_policy() {
  return [](const PolicyInput<double>& in) {
    return bsht_order(in.world, in.product, in.week, in.state);
  };
}

// ---------------------------------------------------------------------------

std::size_t FeatureSpec::base_size() const {
  // bias, sin, cos, 3 cost ratios, log scale, trailing std, onhand, tip,
  // gap, pred lead
  return 12 + (lead_jit + 1) + (lead_llt + 1) + demand_lags +
         2 * action_lags + price_slots;
}

void to_json(nlohmann::json& j, const FeatureSpec& s) {
  j = {{"demand_lags", s.demand_lags}, {"action_lags", s.action_lags},
       {"lead_jit", s.lead_jit},       {"lead_llt", s.lead_llt},
       {"price_slots", s.price_slots}, {"embed_dim", s.embed_dim},
       {"num_products", s.num_products}};
}

void from_json(const nlohmann::json& j, FeatureSpec& s) {
  j.at("demand_lags").get_to(s.demand_lags);
  j.at("action_lags").get_to(s.action_lags);
  j.at("lead_jit").get_to(s.lead_jit);
  j.at("lead_llt").get_to(s.lead_llt);
  j.at("price_slots").get_to(s.price_slots);
  j.at("embed_dim").get_to(s.embed_dim);
  j.at("num_products").get_to(s.num_products);
}

FeatureSpec default_feature_spec(const ExoWorld& w, std::size_t price_slots) {
  FeatureSpec s;
  s.lead_jit = w.lead_jit;
  s.lead_llt = w.lead_llt;
  s.price_slots = price_slots;
  s.num_products = w.num_products;
  return s;
}

std::vector<std::string> feature_names(const FeatureSpec& spec) {
  std::vector<std::string> n = {"bias",     "season_sin", "season_cos",
                                "cost_jit", "cost_llt",   "holding",
                                "log_scale", "demand_std", "onhand",
                                "tip",      "tip_gap",    "pred_lead"};
  for (std::size_t k = 0; k <= spec.lead_jit; ++k) n.push_back("pipe_jit_" + std::to_string(k));
  for (std::size_t k = 0; k <= spec.lead_llt; ++k) n.push_back("pipe_llt_" + std::to_string(k));
  for (std::size_t k = 1; k <= spec.demand_lags; ++k) n.push_back("demand_lag_" + std::to_string(k));
  for (std::size_t k = 1; k <= spec.action_lags; ++k) {
    n.push_back("jit_lag_" + std::to_string(k));
    n.push_back("llt_lag_" + std::to_string(k));
  }
  for (std::size_t k = 0; k < spec.price_slots; ++k) n.push_back("price_" + std::to_string(k));
  return n;
}

double demand_scale(const ExoWorld& w, std::size_t product, std::size_t week) {
  return trailing_mean_demand(w, product, week) + 1.0;
}

namespace {

template <class S>
struct Const;
template <>
struct Const<double> {
  explicit Const(const PolicyInput<double>&) {}
  double operator()(double x) const { return x; }
};
template <>
struct Const<ad::Var> {
  ad::Tape* tape;
  explicit Const(const PolicyInput<ad::Var>& in) : tape(in.state.onhand.tape()) {}
  ad::Var operator()(double x) const { return tape->leaf(x); }
};

void require_finite(double x, const char* what, std::size_t week) {
  if (!std::isfinite(x)) {
    throw DomainError(std::string("featurize: non-finite ") + what + " at week " +
                      std::to_string(week));
  }
}

}  // namespace

template <class S>
std::vector<S> featurize(const FeatureSpec& spec, const PolicyInput<S>& in) {
  const ExoWorld& w = in.world;
  const std::size_t t = in.week;
  const std::size_t i = in.product;
  if (in.state.pipeline_jit.size() != spec.lead_jit + 1 ||
      in.state.pipeline_llt.size() != spec.lead_llt + 1) {
    throw DomainError("featurize: state pipelines do not match feature spec");
  }
  if (!in.price_forecast.empty() && in.price_forecast.size() != spec.price_slots) {
    throw DomainError("featurize: expected " + std::to_string(spec.price_slots) +
                      " price slots, got " + std::to_string(in.price_forecast.size()));
  }
  // Demand history: weeks strictly before t.
  const std::size_t b = window_begin(t, kTipWindow);
  for (std::size_t u = std::min(b, t >= spec.demand_lags ? t - spec.demand_lags : 0); u < t; ++u) {
    require_finite(w.at(i, u).demand, "demand", u);
  }
  const ExoProductWeek& now = w.at(i, t);
  require_finite(now.price, "price", t);
  require_finite(now.cost_jit, "cost_jit", t);
  require_finite(now.cost_llt, "cost_llt", t);
  require_finite(now.holding_cost, "holding_cost", t);
  require_finite(ad::value_of(in.state.onhand), "onhand", t);

  const Const<S> c(in);
  const double scale = demand_scale(w, i, t);
  const double inv = 1.0 / scale;
  const double price = now.price;
  const double pinv = price > 0.0 ? 1.0 / price : 0.0;
  const double angle = 2.0 * std::numbers::pi *
                       static_cast<double>(t % kSeasonPeriod) /
                       static_cast<double>(kSeasonPeriod);
  const HorizonTip tip = horizon_tip(w, i, t);

  std::vector<S> f;
  f.reserve(spec.base_size());
  f.push_back(c(1.0));
  f.push_back(c(std::sin(angle)));
  f.push_back(c(std::cos(angle)));
  f.push_back(c(now.cost_jit * pinv));
  f.push_back(c(now.cost_llt * pinv));
  f.push_back(c(now.holding_cost * pinv));
  f.push_back(c(std::log(scale) / 4.0));
  f.push_back(c(trailing_std_demand(w, i, t) * inv));
  f.push_back(in.state.onhand * inv);
  f.push_back(c(tip.level * inv));
  f.push_back((tip.level - in.state.onhand - inflight_within(in.state, tip.pred_lead)) * inv);
  f.push_back(c(static_cast<double>(tip.pred_lead) /
                static_cast<double>(std::max<std::size_t>(1, spec.lead_llt))));
  for (std::size_t k = 0; k <= spec.lead_jit; ++k) {
    require_finite(ad::value_of(in.state.pipeline_jit.at(k)), "pipeline", t);
    f.push_back(in.state.pipeline_jit.at(k) * inv);
  }
  for (std::size_t k = 0; k <= spec.lead_llt; ++k) {
    require_finite(ad::value_of(in.state.pipeline_llt.at(k)), "pipeline", t);
    f.push_back(in.state.pipeline_llt.at(k) * inv);
  }
  for (std::size_t k = 1; k <= spec.demand_lags; ++k) {
    f.push_back(c(k <= t ? w.at(i, t - k).demand * inv : 0.0));
  }
  const std::size_t na = in.past_actions.size();
  for (std::size_t k = 1; k <= spec.action_lags; ++k) {
    if (k <= na) {
      const auto& a = in.past_actions[na - k];
      require_finite(ad::value_of(a.qty_jit), "action", t);
      require_finite(ad::value_of(a.qty_llt), "action", t);
      f.push_back(a.qty_jit * inv);
      f.push_back(a.qty_llt * inv);
    } else {
      f.push_back(c(0.0));
      f.push_back(c(0.0));
    }
  }
  const double vol = w.unit_volumes.at(i);
  for (std::size_t k = 0; k < spec.price_slots; ++k) {
    if (in.price_forecast.empty()) {
      f.push_back(c(0.0));  // unpriced run of a priced policy
      continue;
    }
    require_finite(ad::value_of(in.price_forecast[k]), "price forecast", t);
    f.push_back(in.price_forecast[k] * (vol * pinv));
  }
  return f;
}

template std::vector<double> featurize(const FeatureSpec&, const PolicyInput<double>&);
template std::vector<ad::Var> featurize(const FeatureSpec&, const PolicyInput<ad::Var>&);

// ---------------------------------------------------------------------------

std::vector<double> PolicyParams::flat() const {
  std::vector<double> out = net.flat;
  out.insert(out.end(), embedding.begin(), embedding.end());
  return out;
}

void PolicyParams::set_flat(std::span<const double> flat) {
  if (flat.size() != param_count()) throw DomainError("set_flat: size mismatch");
  std::copy(flat.begin(), flat.begin() + static_cast<long>(net.flat.size()), net.flat.begin());
  std::copy(flat.begin() + static_cast<long>(net.flat.size()), flat.end(), embedding.begin());
}

PolicyParams make_policy_params(const FeatureSpec& spec,
                                std::vector<std::size_t> hidden,
                                Activation act, std::uint64_t seed,
                                bool mask_llt) {
  PolicyParams p;
  p.features = spec;
  p.mask_llt = mask_llt;
  std::vector<std::size_t> sizes;
  sizes.push_back(spec.input_size());
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(2);
  p.net = mlp_init(sizes, act, seed);
  // Start near "order about one week of demand" on JIT, little on LLT.
  const std::size_t ob = p.net.bias_offset(p.net.num_layers() - 1);
  p.net.flat[ob] = 0.5;
  p.net.flat[ob + 1] = mask_llt ? 0.0 : -1.0;
  p.embedding.assign(spec.num_products * spec.embed_dim, 0.0);
  return p;
}

namespace {

std::span<const double> embedding_row(const PolicyParams& p, std::size_t product) {
  if (p.features.embed_dim == 0) return {};
  if (product >= p.features.num_products) {
    throw DomainError("rl_order: product index beyond embedding table");
  }
  return std::span<const double>(p.embedding).subspan(product * p.features.embed_dim,
                                                      p.features.embed_dim);
}

}  // namespace

Action rl_order(const PolicyParams& p, const PolicyInput<double>& in) {
  std::vector<double> x = featurize(p.features, in);
  auto e = embedding_row(p, in.product);
  x.insert(x.end(), e.begin(), e.end());
  const std::vector<double> z = mlp_forward(p.net, x);
  const double s = demand_scale(in.world, in.product, in.week);
  Action a;
  a.qty_jit = ad::softplus(z[0]) * s;
  a.qty_llt = p.mask_llt ? 0.0 : ad::softplus(z[1]) * s;
  return a;
}

BasicAction<ad::Var> rl_order(const PolicyParams& p,
                              const PolicyInput<ad::Var>& in,
                              std::span<const ad::Var> params) {
  ad::Tape& tape = *in.state.onhand.tape();
  std::vector<ad::Var> x = featurize(p.features, in);
  const std::size_t nw = p.net.flat.size();
  std::vector<ad::Var> z;
  if (!params.empty()) {
    if (params.size() != p.param_count()) throw DomainError("rl_order: bound params size mismatch");
    const std::size_t d = p.features.embed_dim;
    if (d > 0) {
      if (in.product >= p.features.num_products) {
        throw DomainError("rl_order: product index beyond embedding table");
      }
      auto e = params.subspan(nw + in.product * d, d);
      x.insert(x.end(), e.begin(), e.end());
    }
    z = mlp_forward(p.net, params.subspan(0, nw), x);
  } else {
    for (double v : embedding_row(p, in.product)) x.push_back(tape.leaf(v));
    z = mlp_forward(p.net, std::span<const double>(p.net.flat), x);
  }
  const double s = demand_scale(in.world, in.product, in.week);
  BasicAction<ad::Var> a;
  a.qty_jit = ad::softplus(z[0]) * s;
  a.qty_llt = p.mask_llt ? tape.leaf(0.0) : ad::softplus(z[1]) * s;
  return a;
}

OrderPolicy<double> make_rl_policy(const PolicyParams& p) {
  return [&p](const PolicyInput<double>& in) { return rl_order(p, in); };
}

void save_policy(const std::filesystem::path& path, const PolicyParams& p,
                 const nlohmann::json& extra) {
  nlohmann::json h;
  h["format"] = "dualsrc-policy";
  h["version"] = 1;
  h["sizes"] = p.net.sizes;
  h["activation"] = std::string(activation_name(p.net.activation));
  h["seed"] = p.net.seed;
  h["features"] = p.features;
  h["mask_llt"] = p.mask_llt;
  h["net_count"] = p.net.flat.size();
  h["embedding_count"] = p.embedding.size();
  h["extra"] = extra;
  write_blob(path, "DSPP", h, p.flat());
}

PolicyParams load_policy(const std::filesystem::path& path,
                         nlohmann::json* extra) {
  Blob b = read_blob(path, "DSPP");
  const auto& h = b.header;
  if (h.value("version", 0) != 1) throw VersionError("unsupported policy file version");
  PolicyParams p;
  try {
    p.features = h.at("features").get<FeatureSpec>();
    p.mask_llt = h.at("mask_llt").get<bool>();
    p.net.sizes = h.at("sizes").get<std::vector<std::size_t>>();
    p.net.activation = parse_activation(h.at("activation").get<std::string>());
    p.net.seed = h.at("seed").get<std::uint64_t>();
    const auto nn = h.at("net_count").get<std::size_t>();
    const auto ne = h.at("embedding_count").get<std::size_t>();
    if (nn != mlp_param_count(p.net.sizes) || nn + ne != b.data.size() ||
        ne != p.features.num_products * p.features.embed_dim) {
      throw ParseError("policy file: parameter counts disagree with header", 0);
    }
    p.net.flat.assign(b.data.begin(), b.data.begin() + static_cast<long>(nn));
    p.embedding.assign(b.data.begin() + static_cast<long>(nn), b.data.end());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("policy file header: ") + e.what(), 0);
  }
  if (extra != nullptr) *extra = h.value("extra", nlohmann::json::object());
  return p;
}

std::vector<double> tbs_alpha_grid() {
  std::vector<double> g;
  for (int k = 0; k <= 6; ++k) g.push_back(0.25 * k);
  return g;
}

AlphaSearchResult search_tbs_alpha(const ExoWorld& w, std::size_t start_week,
                                   std::size_t end_week) {
  AlphaSearchResult r;
  r.alphas = tbs_alpha_grid();
  double best = -std::numeric_limits<double>::infinity();
  for (double alpha : r.alphas) {
    const auto policy = make_tbs_policy(TbsConfig{alpha});
    double total = 0.0;
    for (std::size_t i = 0; i < w.num_products; ++i) {
      total += rollout(w, i, policy, nullptr, initial_state(w, i, start_week), end_week).cumulative;
    }
    r.rewards.push_back(total);
    if (total > best) {
      best = total;
      r.best_alpha = alpha;
    }
  }
  return r;
}

}  // namespace dualsrc
