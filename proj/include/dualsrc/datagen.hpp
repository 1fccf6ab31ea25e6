#pragma once

// Seeded synthetic worlds and the world.dsw file format.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualsrc/exo.hpp"

namespace dualsrc {

struct GenSpec {
  std::size_t num_products = 200;
  std::size_t horizon = 124;
  std::size_t lead_jit = 2;
  std::size_t lead_llt = 8;
  std::uint64_t seed = 1;
  // Seed for the week-by-week stochastic paths (demand noise, arrival
  // shares, supply caps). Product attributes depend on `seed` only, so
  // resampling paths keeps the same product catalogue. 0 = use `seed`.
  std::uint64_t path_seed = 0;

  // Demand: base level per product is log-normal.
  double base_demand_median = 20.0;
  double base_demand_log_sd = 0.8;
  double season_amplitude_min = 0.1;
  double season_amplitude_max = 0.4;
  std::size_t season_period = 52;
  double noise_cv = 0.3;
  std::vector<std::size_t> holiday_weeks = {47, 48, 51};  // week-of-year
  double holiday_lift = 0.4;

  // Economics.
  double price_min = 5.0;
  double price_max = 50.0;
  double margin_min = 0.25;  // (price - cost_jit) / price
  double margin_max = 0.45;
  double llt_discount_min = 0.70;  // cost_llt / cost_jit
  double llt_discount_max = 0.95;
  double holding_rate = 0.01;  // per week, fraction of cost_jit

  // Arrival shares: per-week Dirichlet around a nominal lead profile.
  double shares_concentration_jit = 30.0;
  double shares_concentration_llt = 30.0;

  // Supply caps: a fraction of weeks gets a cap below a typical order.
  double cap_binding_fraction = 0.10;
  double cap_binding_low = 0.2;   // x base demand
  double cap_binding_high = 0.8;
  double cap_slack_multiple = 50.0;  // x base demand on ordinary weeks

  // Vendor constraints.
  double moq_max_fraction = 0.5;  // MOQ drawn in [0, this * base]

  double unit_volume_min = 0.5;
  double unit_volume_max = 2.0;
  double init_cover_weeks = 3.0;  // initial inventory = base * this
  double discount_factor = 0.995;

  bool operator==(const GenSpec&) const = default;
};

void to_json(nlohmann::json& j, const GenSpec& s);
void from_json(const nlohmann::json& j, GenSpec& s);

// Throws DomainError on an invalid spec.
void validate_spec(const GenSpec& spec);

ExoWorld generate_world(const GenSpec& spec);

// Nominal (generative mean) arrival profile for a lead time; mass peaks at
// `lead` (JIT) or at `lead - 1 .. lead` (LLT).
std::vector<double> nominal_shares_jit(std::size_t lead);
std::vector<double> nominal_shares_llt(std::size_t lead);

// Mean demand of the generative model at a week (no noise).
double mean_demand(const ProductProfile& p, const GenSpec& spec,
                   std::size_t week);

// Mixes (seed, a, b) into an independent 64-bit stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                          std::uint64_t b = 0);

constexpr int kWorldFormatVersion = 1;

void save_world(const std::filesystem::path& path, const ExoWorld& world,
                const nlohmann::json& meta = nlohmann::json::object());
// Throws ParseError (with byte offset) or VersionError; never returns a
// partially filled world.
ExoWorld load_world(const std::filesystem::path& path,
                    nlohmann::json* meta = nullptr);
std::string serialize_world(const ExoWorld& world,
                            const nlohmann::json& meta = nlohmann::json::object());
ExoWorld parse_world(const std::string& text, nlohmann::json* meta = nullptr);

}  // namespace dualsrc
