#include "dualsrc/exo.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "dualsrc/errors.hpp"

namespace dualsrc {

double post_process_order(double q, const VendorConstraints& vc) {
  if (!(q >= 0.0)) throw DomainError("post_process_order: negative order");
  if (q == 0.0 || q < 0.5 * vc.min_order_qty) return 0.0;
  const double lifted = std::max(q, vc.min_order_qty);
  const double b = vc.batch_size;
  if (b == 0.0) return lifted;  // continuous vendor
  double k = std::ceil(lifted / b);
  // Guard against x/b landing a hair above an integer for exact multiples.
  if ((k - 1.0) * b >= lifted) k -= 1.0;
  return k * b;
}

ad::Var post_process_order(ad::Var q, const VendorConstraints& vc) {
  const double out = post_process_order(q.value(), vc);
  return q.tape()->push1(ad::Op::kCustom, out, q.id(), out > 0.0 ? 1.0 : 0.0);
}

double fulfilled_quantity(double q, double cap, const VendorConstraints& vc) {
  return std::min(cap, post_process_order(q, vc));
}

ad::Var fulfilled_quantity(ad::Var q, double cap, const VendorConstraints& vc) {
  // Cap first: a tie sends no gradient to the order.
  return ad::min(cap, post_process_order(q, vc));
}

std::vector<double> compute_arrivals(double q, double cap,
                                     const std::vector<double>& shares,
                                     const VendorConstraints& vc) {
  if (!(cap >= 0.0)) throw DomainError("compute_arrivals: negative cap");
  const double filled = fulfilled_quantity(q, cap, vc);
  std::vector<double> out(shares.size());
  for (std::size_t j = 0; j < shares.size(); ++j) out[j] = filled * shares[j];
  return out;
}

std::vector<double> compute_arrivals(double q, double cap,
                                     const std::vector<double>& shares,
                                     const VendorConstraints& vc,
                                     std::size_t lead) {
  if (shares.size() != lead + 1) {
    throw DomainError("compute_arrivals: " + std::to_string(shares.size()) +
                      " shares for lead time " + std::to_string(lead));
  }
  return compute_arrivals(q, cap, shares, vc);
}

bool is_simplex(const std::vector<double>& shares, double tol) {
  if (shares.empty()) return false;
  double s = 0.0;
  for (double x : shares) {
    if (!(x >= 0.0) || !std::isfinite(x)) return false;
    s += x;
  }
  return std::abs(s - 1.0) <= tol;
}

std::size_t median_offset(const std::vector<double>& shares) {
  double c = 0.0;
  for (std::size_t j = 0; j < shares.size(); ++j) {
    c += shares[j];
    if (c >= 0.5 - 1e-12) return j;
  }
  return shares.empty() ? 0 : shares.size() - 1;
}

namespace {

struct Collector {
  ValidationReport report;
  void add(long i, long t, std::string what) {
    report.violations.push_back({i, t, std::move(what)});
  }
};

bool nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

}  // namespace

ValidationReport validate_world(const ExoWorld& w) {
  Collector c;
  if (!(w.lead_llt > w.lead_jit)) c.add(-1, -1, "lead_llt must exceed lead_jit");
  if (!(w.discount_factor > 0.0 && w.discount_factor <= 1.0)) {
    c.add(-1, -1, "discount_factor outside (0,1]");
  }
  if (w.capacity_limits.size() != w.horizon) {
    c.add(-1, -1, "capacity_limits length != horizon");
  }
  for (std::size_t t = 0; t < w.capacity_limits.size(); ++t) {
    if (!(w.capacity_limits[t] > 0.0)) {
      c.add(-1, static_cast<long>(t), "capacity limit must be > 0");
    }
  }
  if (w.init_inventory.size() != w.num_products ||
      w.unit_volumes.size() != w.num_products ||
      w.weeks.size() != w.num_products) {
    c.add(-1, -1, "per-product arrays do not match num_products");
    return c.report;
  }
  if (!w.profiles.empty() && w.profiles.size() != w.num_products) {
    c.add(-1, -1, "profiles length != num_products");
  }
  for (std::size_t i = 0; i < w.num_products; ++i) {
    const long pi = static_cast<long>(i);
    if (!nonneg(w.init_inventory[i])) c.add(pi, -1, "initial inventory < 0");
    if (!(w.unit_volumes[i] > 0.0) || !std::isfinite(w.unit_volumes[i])) {
      c.add(pi, -1, "unit volume must be > 0");
    }
    if (w.weeks[i].size() != w.horizon) {
      c.add(pi, -1, "week count != horizon");
      continue;
    }
    for (std::size_t t = 0; t < w.horizon; ++t) {
      const long pt = static_cast<long>(t);
      const ExoProductWeek& e = w.weeks[i][t];
      if (!nonneg(e.demand)) c.add(pi, pt, "demand < 0");
      if (!nonneg(e.price)) c.add(pi, pt, "price < 0");
      if (!nonneg(e.cost_jit)) c.add(pi, pt, "cost_jit < 0");
      if (!nonneg(e.cost_llt)) c.add(pi, pt, "cost_llt < 0");
      if (!nonneg(e.holding_cost)) c.add(pi, pt, "holding_cost < 0");
      if (e.cost_llt > e.cost_jit) c.add(pi, pt, "cost_llt > cost_jit (LLT discount)");
      if (!nonneg(e.supply_cap_jit)) c.add(pi, pt, "supply_cap_jit < 0");
      if (!nonneg(e.supply_cap_llt)) c.add(pi, pt, "supply_cap_llt < 0");
      if (e.arrival_shares_jit.size() != w.lead_jit + 1) {
        c.add(pi, pt, "arrival_shares_jit length != lead_jit + 1");
      } else if (!is_simplex(e.arrival_shares_jit)) {
        c.add(pi, pt, "arrival_shares_jit not a simplex");
      }
      if (e.arrival_shares_llt.size() != w.lead_llt + 1) {
        c.add(pi, pt, "arrival_shares_llt length != lead_llt + 1");
      } else if (!is_simplex(e.arrival_shares_llt)) {
        c.add(pi, pt, "arrival_shares_llt not a simplex");
      }
      for (const VendorConstraints* v : {&e.vendor_jit, &e.vendor_llt}) {
        if (!(v->batch_size >= 1.0 || v->batch_size == 0.0)) c.add(pi, pt, "batch_size must be 0 or >= 1");
        if (!nonneg(v->min_order_qty)) c.add(pi, pt, "min_order_qty < 0");
      }
    }
  }
  return c.report;
}

namespace {

struct Fnv {
  std::uint64_t h = 1469598103934665603ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  }
  void d(double x) { bytes(&x, sizeof x); }
  void u(std::size_t x) { bytes(&x, sizeof x); }
  void v(const std::vector<double>& xs) {
    u(xs.size());
    for (double x : xs) d(x);
  }
};

}  // namespace

std::uint64_t world_hash(const ExoWorld& w) {
  Fnv f;
  f.u(w.num_products);
  f.u(w.horizon);
  f.u(w.lead_jit);
  f.u(w.lead_llt);
  f.v(w.init_inventory);
  f.v(w.capacity_limits);
  f.v(w.unit_volumes);
  f.d(w.discount_factor);
  for (const auto& row : w.weeks) {
    for (const auto& e : row) {
      f.d(e.demand);
      f.d(e.price);
      f.d(e.cost_jit);
      f.d(e.cost_llt);
      f.d(e.holding_cost);
      f.v(e.arrival_shares_jit);
      f.v(e.arrival_shares_llt);
      f.d(e.supply_cap_jit);
      f.d(e.supply_cap_llt);
      f.d(e.vendor_jit.min_order_qty);
      f.d(e.vendor_jit.batch_size);
      f.d(e.vendor_llt.min_order_qty);
      f.d(e.vendor_llt.batch_size);
    }
  }
  for (const auto& p : w.profiles) {
    f.d(p.base_demand);
    f.d(p.season_amplitude);
    f.d(p.season_phase);
    f.v(p.mean_shares_jit);
    f.v(p.mean_shares_llt);
    f.d(p.mean_cap_jit);
    f.d(p.mean_cap_llt);
  }
  return f.h;
}

}  // namespace dualsrc
