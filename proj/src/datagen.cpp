#include "dualsrc/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "dualsrc/errors.hpp"

namespace dualsrc {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                          std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

#define DUALSRC_SPEC_FIELDS(X)                                               \
  X(num_products) X(horizon) X(lead_jit) X(lead_llt) X(seed) X(path_seed)    \
  X(base_demand_median) X(base_demand_log_sd) X(season_amplitude_min)        \
  X(season_amplitude_max) X(season_period) X(noise_cv) X(holiday_weeks)      \
  X(holiday_lift) X(price_min) X(price_max) X(margin_min) X(margin_max)      \
  X(llt_discount_min) X(llt_discount_max) X(holding_rate)                    \
  X(shares_concentration_jit) X(shares_concentration_llt)                    \
  X(cap_binding_fraction) X(cap_binding_low) X(cap_binding_high)             \
  X(cap_slack_multiple) X(moq_max_fraction) X(unit_volume_min)               \
  X(unit_volume_max) X(init_cover_weeks) X(discount_factor)

void to_json(nlohmann::json& j, const GenSpec& s) {
  j = nlohmann::json::object();
#define X(f) j[#f] = s.f;
  DUALSRC_SPEC_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, GenSpec& s) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
#define X(f)                   \
  if (key == #f) {             \
    value.get_to(s.f);         \
    known = true;              \
  }
    DUALSRC_SPEC_FIELDS(X)
#undef X
    if (!known) throw DomainError("unknown GenSpec field '" + key + "'");
  }
}

#undef DUALSRC_SPEC_FIELDS

void validate_spec(const GenSpec& s) {
  auto req = [](bool ok, const char* what) {
    if (!ok) throw DomainError(std::string("invalid GenSpec: ") + what);
  };
  req(s.num_products >= 1, "num_products >= 1");
  req(s.horizon >= 1, "horizon >= 1");
  req(s.lead_llt > s.lead_jit, "lead_llt > lead_jit");
  req(s.base_demand_median > 0.0, "base_demand_median > 0");
  req(s.base_demand_log_sd >= 0.0, "base_demand_log_sd >= 0");
  req(s.season_amplitude_min >= 0.0 &&
          s.season_amplitude_max >= s.season_amplitude_min &&
          s.season_amplitude_max < 1.0,
      "0 <= season amplitude range < 1");
  req(s.season_period >= 1, "season_period >= 1");
  req(s.noise_cv >= 0.0, "noise_cv >= 0");
  req(s.holiday_lift >= 0.0, "holiday_lift >= 0");
  req(s.price_min > 0.0 && s.price_max >= s.price_min, "price range");
  req(s.margin_min >= 0.0 && s.margin_max >= s.margin_min && s.margin_max < 1.0,
      "margin range");
  req(s.llt_discount_min > 0.0 && s.llt_discount_max >= s.llt_discount_min &&
          s.llt_discount_max < 1.0,
      "LLT discount in (0,1)");
  req(s.holding_rate >= 0.0, "holding_rate >= 0");
  req(s.shares_concentration_jit > 0.0 && s.shares_concentration_llt > 0.0,
      "share concentrations > 0");
  req(s.cap_binding_fraction >= 0.0 && s.cap_binding_fraction <= 1.0,
      "cap_binding_fraction in [0,1]");
  req(s.cap_binding_low >= 0.0 && s.cap_binding_high >= s.cap_binding_low,
      "binding cap range");
  req(s.cap_slack_multiple > 0.0, "cap_slack_multiple > 0");
  req(s.moq_max_fraction >= 0.0, "moq_max_fraction >= 0");
  req(s.unit_volume_min > 0.0 && s.unit_volume_max >= s.unit_volume_min,
      "unit volume range");
  req(s.init_cover_weeks >= 0.0, "init_cover_weeks >= 0");
  req(s.discount_factor > 0.0 && s.discount_factor <= 1.0,
      "discount_factor in (0,1]");
}

std::vector<double> nominal_shares_jit(std::size_t lead) {
  std::vector<double> p(lead + 1, 0.0);
  if (lead == 0) {
    p[0] = 1.0;
  } else if (lead == 1) {
    p[0] = 0.25;
    p[1] = 0.75;
  } else {
    p[lead] = 0.7;
    p[lead - 1] = 0.2;
    const double rest = 0.1 / static_cast<double>(lead - 1);
    for (std::size_t j = 0; j + 1 < lead; ++j) p[j] = rest;
  }
  return p;
}

std::vector<double> nominal_shares_llt(std::size_t lead) {
  std::vector<double> p(lead + 1, 0.0);
  if (lead == 1) {
    p[0] = 0.5;
    p[1] = 0.5;
  } else {
    p[lead] = 0.45;
    p[lead - 1] = 0.45;
    const double rest = 0.1 / static_cast<double>(lead - 1);
    for (std::size_t j = 0; j + 1 < lead; ++j) p[j] = rest;
  }
  return p;
}

double mean_demand(const ProductProfile& p, const GenSpec& spec,
                   std::size_t week) {
  const double period = static_cast<double>(spec.season_period);
  const double angle =
      2.0 * std::numbers::pi * (static_cast<double>(week) + p.season_phase) / period;
  double m = p.base_demand * (1.0 + p.season_amplitude * std::sin(angle));
  const std::size_t woy = week % spec.season_period;
  if (std::find(spec.holiday_weeks.begin(), spec.holiday_weeks.end(), woy) !=
      spec.holiday_weeks.end()) {
    m *= 1.0 + spec.holiday_lift;
  }
  return m;
}

namespace {

std::vector<double> dirichlet(std::mt19937_64& rng,
                              const std::vector<double>& mean,
                              double concentration) {
  std::vector<double> x(mean.size(), 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < mean.size(); ++j) {
    if (mean[j] <= 0.0) continue;
    std::gamma_distribution<double> g(concentration * mean[j], 1.0);
    x[j] = g(rng);
    total += x[j];
  }
  if (!(total > 0.0)) return mean;
  for (double& v : x) v /= total;
  return x;
}

double round_to(double x, double unit) { return std::round(x / unit) * unit; }

}  // namespace

ExoWorld generate_world(const GenSpec& spec) {
  validate_spec(spec);
  const std::uint64_t path_seed = spec.path_seed == 0 ? spec.seed : spec.path_seed;
  ExoWorld w;
  w.num_products = spec.num_products;
  w.horizon = spec.horizon;
  w.lead_jit = spec.lead_jit;
  w.lead_llt = spec.lead_llt;
  w.discount_factor = spec.discount_factor;
  w.capacity_limits.assign(spec.horizon, std::numeric_limits<double>::infinity());
  w.init_inventory.resize(spec.num_products);
  w.unit_volumes.resize(spec.num_products);
  w.weeks.resize(spec.num_products);
  w.profiles.resize(spec.num_products);

  const auto jit_mean = nominal_shares_jit(spec.lead_jit);
  const auto llt_mean = nominal_shares_llt(spec.lead_llt);

  for (std::size_t i = 0; i < spec.num_products; ++i) {
    std::mt19937_64 attr(derive_seed(spec.seed, i, 1));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(attr); };
    std::normal_distribution<double> n01(0.0, 1.0);

    ProductProfile& prof = w.profiles[i];
    prof.base_demand =
        spec.base_demand_median * std::exp(spec.base_demand_log_sd * n01(attr));
    prof.season_amplitude =
        uniform(spec.season_amplitude_min, spec.season_amplitude_max);
    prof.season_phase = uniform(0.0, static_cast<double>(spec.season_period));
    prof.mean_shares_jit = jit_mean;
    prof.mean_shares_llt = llt_mean;

    const double price = uniform(spec.price_min, spec.price_max);
    const double margin = uniform(spec.margin_min, spec.margin_max);
    const double cost_jit = price * (1.0 - margin);
    const double cost_llt = cost_jit * uniform(spec.llt_discount_min, spec.llt_discount_max);
    const double holding = spec.holding_rate * cost_jit;
    const double base = prof.base_demand;

    auto vendor = [&]() {
      VendorConstraints vc;
      vc.min_order_qty = std::floor(uniform(0.0, spec.moq_max_fraction * base));
      const double batches[] = {1.0, 2.0, 5.0, 10.0};
      std::size_t max_k = 0;
      for (std::size_t k = 0; k < 4; ++k) {
        if (batches[k] <= std::max(1.0, base / 5.0)) max_k = k;
      }
      vc.batch_size = batches[static_cast<std::size_t>(uniform(0.0, 1.0) * (max_k + 1)) % (max_k + 1)];
      return vc;
    };
    const VendorConstraints vendor_jit = vendor();
    const VendorConstraints vendor_llt = vendor();

    w.unit_volumes[i] = round_to(uniform(spec.unit_volume_min, spec.unit_volume_max), 0.01);
    w.init_inventory[i] = std::round(base * spec.init_cover_weeks);

    const double slack_cap = spec.cap_slack_multiple * base;
    const double binding_mid = 0.5 * (spec.cap_binding_low + spec.cap_binding_high) * base;
    prof.mean_cap_jit = (1.0 - spec.cap_binding_fraction) * slack_cap +
                        spec.cap_binding_fraction * binding_mid;
    prof.mean_cap_llt = prof.mean_cap_jit;

    std::mt19937_64 path(derive_seed(path_seed, i, 2));
    std::uniform_real_distribution<double> pu(0.0, 1.0);
    std::normal_distribution<double> pn(0.0, 1.0);
    auto& row = w.weeks[i];
    row.resize(spec.horizon);
    for (std::size_t t = 0; t < spec.horizon; ++t) {
      ExoProductWeek& e = row[t];
      const double mean = mean_demand(prof, spec, t);
      e.demand = std::max(0.0, mean + spec.noise_cv * mean * pn(path));
      e.price = price;
      e.cost_jit = cost_jit;
      e.cost_llt = cost_llt;
      e.holding_cost = holding;
      e.arrival_shares_jit = dirichlet(path, jit_mean, spec.shares_concentration_jit);
      e.arrival_shares_llt = dirichlet(path, llt_mean, spec.shares_concentration_llt);
      auto cap = [&]() {
        if (pu(path) < spec.cap_binding_fraction) {
          return base * (spec.cap_binding_low +
                         (spec.cap_binding_high - spec.cap_binding_low) * pu(path));
        }
        return slack_cap;
      };
      e.supply_cap_jit = cap();
      e.supply_cap_llt = cap();
      e.vendor_jit = vendor_jit;
      e.vendor_llt = vendor_llt;
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// world.dsw
//
//   line 1: "DSW <version>"
//   line 2: JSON header (dimensions, discount factor, caller metadata)
//   "capacity,K_0,...,K_{T-1}"
//   per product:
//     "product,<i>,<init_inventory>,<unit_volume>"
//     optional "profile,base,amp,phase,cap_jit,cap_llt,<shares_jit>,<shares_llt>"
//     T rows: demand,price,cost_jit,cost_llt,holding,cap_jit,cap_llt,
//             moq_jit,batch_jit,moq_llt,batch_llt,<shares_jit>,<shares_llt>
//   "end"
// Numbers use shortest round-trip formatting, so load(save(w)) == w.

namespace {

void put(std::string& out, double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, res.ptr);
}

void put_row(std::string& out, std::initializer_list<double> xs) {
  bool first = true;
  for (double x : xs) {
    if (!first) out.push_back(',');
    put(out, x);
    first = false;
  }
}

void put_vec(std::string& out, const std::vector<double>& xs) {
  for (double x : xs) {
    out.push_back(',');
    put(out, x);
  }
}

class Reader {
 public:
  explicit Reader(const std::string& text) : s_(text) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ >= s_.size(); }

  // Returns the next line without its newline; throws at end of input.
  std::string_view line(const char* expecting) {
    if (pos_ >= s_.size()) {
      throw ParseError(std::string("unexpected end of file, expecting ") + expecting, pos_);
    }
    const std::size_t nl = s_.find('\n', pos_);
    if (nl == std::string::npos) {
      throw ParseError(std::string("unterminated line, expecting ") + expecting, pos_);
    }
    line_start_ = pos_;
    std::string_view v(s_.data() + pos_, nl - pos_);
    pos_ = nl + 1;
    return v;
  }

  std::size_t line_start() const { return line_start_; }

  // Parses a comma-separated numeric row with a fixed column count.
  std::vector<double> numbers(std::string_view row, std::size_t expect,
                              std::size_t skip_fields = 0) {
    std::vector<double> out;
    out.reserve(expect);
    const char* p = row.data();
    const char* end = row.data() + row.size();
    for (std::size_t k = 0; k < skip_fields; ++k) {
      const char* c = std::find(p, end, ',');
      if (c == end) throw ParseError("missing field", offset(p));
      p = c + 1;
    }
    while (true) {
      double x = 0.0;
      auto res = std::from_chars(p, end, x);
      if (res.ec != std::errc()) throw ParseError("bad number", offset(p));
      out.push_back(x);
      p = res.ptr;
      if (p == end) break;
      if (*p != ',') throw ParseError("expected ','", offset(p));
      ++p;
    }
    if (out.size() != expect) {
      throw ParseError("expected " + std::to_string(expect) + " values, got " +
                           std::to_string(out.size()),
                       line_start_);
    }
    return out;
  }

 private:
  std::size_t offset(const char* p) const {
    return static_cast<std::size_t>(p - s_.data());
  }
  const std::string& s_;
  std::size_t pos_ = 0;
  std::size_t line_start_ = 0;
};

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

}  // namespace

std::string serialize_world(const ExoWorld& w, const nlohmann::json& meta) {
  nlohmann::json h;
  h["format"] = "dualsrc-world";
  h["version"] = kWorldFormatVersion;
  h["num_products"] = w.num_products;
  h["horizon"] = w.horizon;
  h["lead_jit"] = w.lead_jit;
  h["lead_llt"] = w.lead_llt;
  h["discount_factor"] = w.discount_factor;
  h["has_profiles"] = !w.profiles.empty();
  h["meta"] = meta;

  std::string out;
  out.reserve(256 + w.num_products * w.horizon * 160);
  out += "DSW " + std::to_string(kWorldFormatVersion) + "\n";
  out += h.dump();
  out += "\ncapacity";
  put_vec(out, w.capacity_limits);
  out += "\n";
  for (std::size_t i = 0; i < w.num_products; ++i) {
    out += "product," + std::to_string(i) + ",";
    put_row(out, {w.init_inventory[i], w.unit_volumes[i]});
    out += "\n";
    if (!w.profiles.empty()) {
      const ProductProfile& p = w.profiles[i];
      out += "profile,";
      put_row(out, {p.base_demand, p.season_amplitude, p.season_phase,
                    p.mean_cap_jit, p.mean_cap_llt});
      put_vec(out, p.mean_shares_jit);
      put_vec(out, p.mean_shares_llt);
      out += "\n";
    }
    for (const ExoProductWeek& e : w.weeks[i]) {
      put_row(out, {e.demand, e.price, e.cost_jit, e.cost_llt, e.holding_cost,
                    e.supply_cap_jit, e.supply_cap_llt,
                    e.vendor_jit.min_order_qty, e.vendor_jit.batch_size,
                    e.vendor_llt.min_order_qty, e.vendor_llt.batch_size});
      put_vec(out, e.arrival_shares_jit);
      put_vec(out, e.arrival_shares_llt);
      out += "\n";
    }
  }
  out += "end\n";
  return out;
}

ExoWorld parse_world(const std::string& text, nlohmann::json* meta) {
  Reader r(text);
  std::string_view magic = r.line("magic");
  if (!starts_with(magic, "DSW ")) throw ParseError("not a world file", 0);
  int version = 0;
  {
    auto tail = magic.substr(4);
    auto res = std::from_chars(tail.data(), tail.data() + tail.size(), version);
    if (res.ec != std::errc()) throw ParseError("bad version field", 4);
  }
  if (version != kWorldFormatVersion) {
    throw VersionError("world file version " + std::to_string(version) +
                       " not supported (expected " +
                       std::to_string(kWorldFormatVersion) + ")");
  }
  std::string_view header_line = r.line("header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("bad header: ") + e.what(), r.line_start() + e.byte);
  }
  ExoWorld w;
  try {
    w.num_products = h.at("num_products").get<std::size_t>();
    w.horizon = h.at("horizon").get<std::size_t>();
    w.lead_jit = h.at("lead_jit").get<std::size_t>();
    w.lead_llt = h.at("lead_llt").get<std::size_t>();
    w.discount_factor = h.at("discount_factor").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("header missing field: ") + e.what(), r.line_start());
  }
  const bool has_profiles = h.value("has_profiles", false);
  const std::size_t nj = w.lead_jit + 1;
  const std::size_t nl = w.lead_llt + 1;

  std::string_view cap = r.line("capacity row");
  if (!starts_with(cap, "capacity")) throw ParseError("expected capacity row", r.line_start());
  if (w.horizon == 0) {
    if (cap != "capacity") throw ParseError("unexpected capacity values", r.line_start());
  } else {
    w.capacity_limits = r.numbers(cap, w.horizon, 1);
  }

  w.init_inventory.resize(w.num_products);
  w.unit_volumes.resize(w.num_products);
  w.weeks.resize(w.num_products);
  if (has_profiles) w.profiles.resize(w.num_products);
  for (std::size_t i = 0; i < w.num_products; ++i) {
    std::string_view prow = r.line("product row");
    const std::string tag = "product," + std::to_string(i) + ",";
    if (!starts_with(prow, tag)) throw ParseError("expected '" + tag + "'", r.line_start());
    auto pv = r.numbers(prow, 2, 2);
    w.init_inventory[i] = pv[0];
    w.unit_volumes[i] = pv[1];
    if (has_profiles) {
      std::string_view frow = r.line("profile row");
      if (!starts_with(frow, "profile,")) throw ParseError("expected profile row", r.line_start());
      auto f = r.numbers(frow, 5 + nj + nl, 1);
      ProductProfile& p = w.profiles[i];
      p.base_demand = f[0];
      p.season_amplitude = f[1];
      p.season_phase = f[2];
      p.mean_cap_jit = f[3];
      p.mean_cap_llt = f[4];
      p.mean_shares_jit.assign(f.begin() + 5, f.begin() + 5 + static_cast<long>(nj));
      p.mean_shares_llt.assign(f.begin() + 5 + static_cast<long>(nj), f.end());
    }
    auto& row = w.weeks[i];
    row.resize(w.horizon);
    for (std::size_t t = 0; t < w.horizon; ++t) {
      auto v = r.numbers(r.line("week row"), 11 + nj + nl);
      ExoProductWeek& e = row[t];
      e.demand = v[0];
      e.price = v[1];
      e.cost_jit = v[2];
      e.cost_llt = v[3];
      e.holding_cost = v[4];
      e.supply_cap_jit = v[5];
      e.supply_cap_llt = v[6];
      e.vendor_jit = {v[7], v[8]};
      e.vendor_llt = {v[9], v[10]};
      e.arrival_shares_jit.assign(v.begin() + 11, v.begin() + 11 + static_cast<long>(nj));
      e.arrival_shares_llt.assign(v.begin() + 11 + static_cast<long>(nj), v.end());
    }
  }
  if (r.line("end marker") != "end") throw ParseError("expected end marker", r.line_start());
  if (!r.done()) throw ParseError("trailing data after end marker", r.pos());
  if (meta != nullptr) *meta = h.value("meta", nlohmann::json::object());
  return w;
}

void save_world(const std::filesystem::path& path, const ExoWorld& world,
                const nlohmann::json& meta) {
  const std::string text = serialize_world(world, meta);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

ExoWorld load_world(const std::filesystem::path& path, nlohmann::json* meta) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_world(ss.str(), meta);
}

}  // namespace dualsrc
