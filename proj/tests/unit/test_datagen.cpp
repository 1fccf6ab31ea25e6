#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include "dualsrc/datagen.hpp"
#include "dualsrc/policies.hpp"

using namespace dualsrc;

namespace {

namespace fs = std::filesystem;

GenSpec small_spec(std::uint64_t seed = 4) {
  GenSpec s;
  s.num_products = 6;
  s.horizon = 20;
  s.seed = seed;
  return s;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(GenerateWorld, NoNoiseNoSeasonGivesConstantBaseDemand) {
  GenSpec s = small_spec();
  s.noise_cv = 0.0;
  s.season_amplitude_min = s.season_amplitude_max = 0.0;
  s.holiday_lift = 0.0;
  s.horizon = 60;
  const ExoWorld w = generate_world(s);
  for (std::size_t i = 0; i < w.num_products; ++i) {
    for (std::size_t t = 0; t < w.horizon; ++t) {
      EXPECT_NEAR(w.at(i, t).demand, w.profiles[i].base_demand, 1e-12 * w.profiles[i].base_demand);
    }
  }
}

TEST(GenerateWorld, SameSeedSameBytesDifferentSeedDiffers) {
  EXPECT_EQ(serialize_world(generate_world(small_spec(4))), serialize_world(generate_world(small_spec(4))));
  EXPECT_NE(generate_world(small_spec(4)), generate_world(small_spec(5)));
}

TEST(GenerateWorld, PathSeedKeepsCatalogue) {
  GenSpec a = small_spec();
  GenSpec b = a;
  b.path_seed = 77;
  const ExoWorld wa = generate_world(a), wb = generate_world(b);
  EXPECT_EQ(wa.profiles, wb.profiles);
  EXPECT_EQ(wa.unit_volumes, wb.unit_volumes);
  EXPECT_EQ(wa.at(2, 0).price, wb.at(2, 0).price);
  EXPECT_NE(wa.at(2, 3).demand, wb.at(2, 3).demand);
}

TEST(GenerateWorld, DefaultDeskSpecValidatesAndMatchesBaseDemand) {
  const GenSpec s;
  const ExoWorld w = generate_world(s);
  EXPECT_EQ(w.num_products, 200u);
  EXPECT_EQ(w.horizon, 124u);
  const auto report = validate_world(w);
  EXPECT_TRUE(report.ok()) << report.violations.size() << " violations, first: "
                           << (report.ok() ? "" : report.violations[0].what);
  double demand = 0.0, base = 0.0;
  for (std::size_t i = 0; i < w.num_products; ++i) {
    for (std::size_t t = 0; t < w.horizon; ++t) {
      demand += w.at(i, t).demand;
      base += w.profiles[i].base_demand;
    }
  }
  EXPECT_NEAR(demand / base, 1.0, 0.05);
}

TEST(GenerateWorld, BindingCapFractionNearSpec) {
  GenSpec s;
  s.num_products = 100;
  const ExoWorld w = generate_world(s);
  std::size_t binding = 0, total = 0;
  for (std::size_t i = 0; i < w.num_products; ++i) {
    for (std::size_t t = 0; t < w.horizon; ++t) {
      for (double cap : {w.at(i, t).supply_cap_jit, w.at(i, t).supply_cap_llt}) {
        binding += cap < w.profiles[i].base_demand ? 1 : 0;
        ++total;
      }
    }
  }
  EXPECT_NEAR(static_cast<double>(binding) / static_cast<double>(total), 0.10, 0.01);
  s.cap_binding_fraction = 0.0;
  const ExoWorld none = generate_world(s);
  for (const auto& row : none.weeks)
    for (const auto& e : row) EXPECT_GE(e.supply_cap_jit, 1.0);
}

// The generator's seasonality period lines up with the policy's week-of-year
// features: a pure sine season peaks where season_sin/cos say it should.
TEST(GenerateWorld, SeasonPeriodMatchesPolicyFeatures) {
  GenSpec s = small_spec();
  s.noise_cv = 0.0;
  s.holiday_lift = 0.0;
  s.horizon = 104;
  const ExoWorld w = generate_world(s);
  for (std::size_t i = 0; i < w.num_products; ++i) {
    for (std::size_t t = 0; t + kSeasonPeriod < w.horizon; ++t) {
      EXPECT_NEAR(w.at(i, t).demand, w.at(i, t + kSeasonPeriod).demand, 1e-9 * w.profiles[i].base_demand);
    }
  }
  EXPECT_EQ(s.season_period, kSeasonPeriod);
}

TEST(GenerateWorld, InvalidSpecIsDomainError) {
  GenSpec s = small_spec();
  s.num_products = 0;
  EXPECT_THROW(generate_world(s), DomainError);
  s = small_spec();
  s.lead_llt = s.lead_jit;
  EXPECT_THROW(generate_world(s), DomainError);
  s = small_spec();
  s.llt_discount_max = 1.5;
  EXPECT_THROW(generate_world(s), DomainError);
}

TEST(GenerateWorld, PropertyEveryWorldValidates) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    GenSpec s = small_spec(seed);
    s.lead_jit = seed % 3;
    s.lead_llt = s.lead_jit + 1 + seed % 7;
    s.noise_cv = 0.1 * static_cast<double>(seed % 6);
    s.cap_binding_fraction = 0.05 * static_cast<double>(seed % 5);
    EXPECT_TRUE(validate_world(generate_world(s)).ok()) << "seed " << seed;
  }
}

TEST(NominalShares, PeakAtLeads) {
  const auto j = nominal_shares_jit(2);
  ASSERT_EQ(j.size(), 3u);
  EXPECT_TRUE(is_simplex(j));
  EXPECT_EQ(median_offset(j), 2u);
  const auto l = nominal_shares_llt(8);
  ASSERT_EQ(l.size(), 9u);
  EXPECT_TRUE(is_simplex(l));
  EXPECT_GE(median_offset(l), 7u);
}

TEST(DeriveSeed, DistinctStreams) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}

TEST(WorldFile, RoundTripIsExact) {
  const ExoWorld w = generate_world(small_spec());
  const fs::path p = fs::temp_directory_path() / "dualsrc_world_roundtrip.dsw";
  save_world(p, w, {{"spec", nlohmann::json(small_spec())}});
  nlohmann::json meta;
  const ExoWorld back = load_world(p, &meta);
  EXPECT_EQ(back, w);
  EXPECT_EQ(meta.at("spec").get<GenSpec>(), small_spec());
  fs::remove(p);
}

TEST(WorldFile, RoundTripKeepsInfinityAndFiniteCapacity) {
  ExoWorld w = generate_world(small_spec());
  w.capacity_limits[3] = 123.456;
  EXPECT_EQ(parse_world(serialize_world(w)), w);
  EXPECT_TRUE(std::isinf(parse_world(serialize_world(w)).capacity_limits[0]));
}

TEST(WorldFile, TruncationIsParseErrorWithOffset) {
  const std::string text = serialize_world(generate_world(small_spec()));
  for (std::size_t cut : {text.size() - 1, text.size() / 2, std::size_t{10}, std::size_t{3}}) {
    try {
      parse_world(text.substr(0, cut));
      ADD_FAILURE() << "parsed a file cut at " << cut;
    } catch (const ParseError& e) {
      EXPECT_LE(e.offset(), cut);
    }
  }
}

TEST(WorldFile, CorruptNumberReportsItsOffset) {
  std::string text = serialize_world(generate_world(small_spec()));
  const std::size_t at = text.find("product,1,");
  ASSERT_NE(at, std::string::npos);
  const std::size_t row = text.find('\n', at) + 1;
  text[row] = 'x';
  try {
    parse_world(text);
    ADD_FAILURE() << "parsed a corrupt file";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), row);
  }
}

TEST(WorldFile, VersionMismatchIsVersionError) {
  std::string text = serialize_world(generate_world(small_spec()));
  text.replace(0, 5, "DSW 9");
  EXPECT_THROW(parse_world(text), VersionError);
  EXPECT_THROW(parse_world("XYZ 1\n"), ParseError);
}

TEST(WorldFile, HandWrittenFixtureLoads) {
  nlohmann::json meta;
  const ExoWorld w = load_world(fs::path(DUALSRC_FIXTURES) / "minimal.dsw", &meta);
  EXPECT_EQ(meta.at("note"), "hand-written");
  ASSERT_EQ(w.num_products, 1u);
  ASSERT_EQ(w.horizon, 1u);
  EXPECT_EQ(w.lead_jit, 0u);
  EXPECT_EQ(w.lead_llt, 1u);
  EXPECT_EQ(w.discount_factor, 0.99);
  EXPECT_TRUE(std::isinf(w.capacity_limits[0]));
  EXPECT_EQ(w.init_inventory[0], 3.0);
  EXPECT_EQ(w.unit_volumes[0], 1.5);
  const ExoProductWeek& e = w.at(0, 0);
  EXPECT_EQ(e.demand, 7.0);
  EXPECT_EQ(e.price, 12.0);
  EXPECT_EQ(e.cost_jit, 8.0);
  EXPECT_EQ(e.cost_llt, 6.0);
  EXPECT_EQ(e.holding_cost, 0.1);
  EXPECT_EQ(e.supply_cap_jit, 100.0);
  EXPECT_EQ(e.supply_cap_llt, 200.0);
  EXPECT_EQ(e.vendor_jit, (VendorConstraints{0.0, 1.0}));
  EXPECT_EQ(e.vendor_llt, (VendorConstraints{5.0, 2.0}));
  EXPECT_EQ(e.arrival_shares_jit, std::vector<double>{1.0});
  EXPECT_EQ(e.arrival_shares_llt, (std::vector<double>{0.25, 0.75}));
  EXPECT_TRUE(w.profiles.empty());
  EXPECT_TRUE(validate_world(w).ok());
  EXPECT_EQ(serialize_world(w, meta), read_file(fs::path(DUALSRC_FIXTURES) / "minimal.dsw"));
}

TEST(GenSpecJson, RoundTrip) {
  GenSpec s = small_spec(9);
  s.holiday_weeks = {3, 4};
  s.noise_cv = 0.125;
  const nlohmann::json j = s;
  EXPECT_EQ(j.get<GenSpec>(), s);
}
