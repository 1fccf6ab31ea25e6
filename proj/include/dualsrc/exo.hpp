#pragma once

// Exogenous world model: every quantity the buy policy cannot influence,
// plus the vendor post-processor and the order-to-arrivals map.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dualsrc/tape.hpp"

namespace dualsrc {

struct VendorConstraints {
  double min_order_qty = 0.0;
  double batch_size = 1.0;  // 0 = continuous, no rounding

  bool operator==(const VendorConstraints&) const = default;
};

struct ExoProductWeek {
  double demand = 0.0;
  double price = 0.0;
  double cost_jit = 0.0;
  double cost_llt = 0.0;
  double holding_cost = 0.0;
  std::vector<double> arrival_shares_jit;  // length lead_jit + 1
  std::vector<double> arrival_shares_llt;  // length lead_llt + 1
  double supply_cap_jit = 0.0;
  double supply_cap_llt = 0.0;
  VendorConstraints vendor_jit;
  VendorConstraints vendor_llt;

  bool operator==(const ExoProductWeek&) const = default;
};

// Generative-model summary of a product, when the world is synthetic. Used
// for mean-path forecasting; empty for hand-built worlds.
struct ProductProfile {
  double base_demand = 0.0;
  double season_amplitude = 0.0;
  double season_phase = 0.0;
  std::vector<double> mean_shares_jit;
  std::vector<double> mean_shares_llt;
  double mean_cap_jit = 0.0;
  double mean_cap_llt = 0.0;

  bool operator==(const ProductProfile&) const = default;
};

struct ExoWorld {
  std::size_t num_products = 0;
  std::size_t horizon = 0;
  std::size_t lead_jit = 0;
  std::size_t lead_llt = 1;
  std::vector<double> init_inventory;              // [product]
  std::vector<std::vector<ExoProductWeek>> weeks;  // [product][week]
  std::vector<double> capacity_limits;             // [week]
  std::vector<double> unit_volumes;                // [product]
  double discount_factor = 1.0;
  std::vector<ProductProfile> profiles;            // [product] or empty

  const ExoProductWeek& at(std::size_t product, std::size_t week) const {
    return weeks[product][week];
  }

  bool operator==(const ExoWorld&) const = default;
};

template <class S>
struct BasicAction {
  S qty_jit{};
  S qty_llt{};
};
using Action = BasicAction<double>;

// Vendor post-processor: orders below half the MOQ are dropped, otherwise the
// order is lifted to the MOQ and rounded up to a batch multiple.
double post_process_order(double q, const VendorConstraints& vc);

// Tape version: forward value is exact; the backward pass treats the
// post-processor as the identity where the output is positive and as zero
// where the order was suppressed (straight-through).
ad::Var post_process_order(ad::Var q, const VendorConstraints& vc);

// o_j = min(cap, post_process_order(q)) * shares_j.
std::vector<double> compute_arrivals(double q, double cap,
                                     const std::vector<double>& shares,
                                     const VendorConstraints& vc);
// Same, checking that `shares` covers lead offsets 0..lead.
std::vector<double> compute_arrivals(double q, double cap,
                                     const std::vector<double>& shares,
                                     const VendorConstraints& vc,
                                     std::size_t lead);

// Fulfilled quantity min(cap, f_p(q)); the arrivals are this times shares.
double fulfilled_quantity(double q, double cap, const VendorConstraints& vc);
ad::Var fulfilled_quantity(ad::Var q, double cap, const VendorConstraints& vc);

struct Violation {
  long product = -1;  // -1 for world-level violations
  long week = -1;
  std::string what;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate_world(const ExoWorld& w);

// Checks a vector is a probability simplex to within `tol`.
bool is_simplex(const std::vector<double>& shares, double tol = 1e-9);

// Smallest lead offset j with cumulative share >= 0.5.
std::size_t median_offset(const std::vector<double>& shares);

// FNV-1a over the world's numeric content; used to prove policies never
// mutate exogenous data.
std::uint64_t world_hash(const ExoWorld& w);

}  // namespace dualsrc
