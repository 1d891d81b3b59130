#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "acn/billing.hpp"

namespace acn {
namespace {

TEST(Tariff, TimeOfUseRates) {
  const auto t = sce_tou4_summer();
  EXPECT_EQ(tou_rate(t, 13 * 60, false), 0.267);
  EXPECT_EQ(tou_rate(t, 9 * 60, false), 0.092);
  EXPECT_EQ(tou_rate(t, 13 * 60, true), 0.056);
  EXPECT_EQ(tou_rate(t, 2 * 60, false), 0.056);
  EXPECT_EQ(tou_rate(t, 20 * 60, false), 0.092);
  EXPECT_EQ(tou_rate(t, 23 * 60 + 30, false), 0.056);
  EXPECT_EQ(t.demand_charge_rate, 15.51);
  EXPECT_NO_THROW(t.validate());
}

TEST(Tariff, GapRejected) {
  Tariff t = sce_tou4_summer();
  t.weekday[1].start_minute += 10;
  EXPECT_THROW(t.validate(), std::invalid_argument);
}

TEST(Tariff, PriceSeriesFollowsCalendar) {
  const auto t = sce_tou4_summer();
  const PeriodConfig pc;
  const auto p = price_series(t, Weekday::fri, pc, 2 * 288);
  EXPECT_EQ(p[13 * 12], 0.267);
  EXPECT_EQ(p[288 + 13 * 12], 0.056);
}

TEST(Tariff, JsonRoundTrip) {
  const auto t = sce_tou4_summer();
  const auto back = tariff_from_json(tariff_to_json(t));
  for (int m = 0; m < 1440; m += 15) {
    EXPECT_EQ(tou_rate(back, m, false), tou_rate(t, m, false));
    EXPECT_EQ(tou_rate(back, m, true), tou_rate(t, m, true));
  }
  EXPECT_EQ(back.demand_charge_rate, t.demand_charge_rate);
}

TEST(Bill, FlatMonthDemandCharge) {
  const std::vector<double> flat(30 * 288, 100.0);
  const auto b = bill(flat, 0.0, sce_tou4_summer(), 0.30);
  EXPECT_NEAR(b.demand_charge, 1551.0, 1e-9);
  EXPECT_NEAR(b.peak_kw, 100.0, 1e-12);
}

TEST(Bill, OneKwhAtWeekdayPeak) {
  // 12 kW for one 5-minute period at 13:00 on a Monday is 1 kWh.
  std::vector<double> load(288, 0.0);
  load[13 * 12] = 12.0;
  const auto t = sce_tou4_summer();
  const auto b = bill(load, 1.0, t, 0.30, {Weekday::mon, 5.0, 0.0});
  EXPECT_NEAR(b.revenue, 0.30, 1e-12);
  EXPECT_NEAR(b.energy_cost, 0.267, 1e-12);
  EXPECT_NEAR(b.profit, b.revenue - b.energy_cost - b.demand_charge, 1e-12);
}

TEST(Bill, ZeroProfileAndNegativeLoad) {
  const std::vector<double> zero(100, 0.0);
  const auto b = bill(zero, 0.0, sce_tou4_summer(), 0.30);
  EXPECT_EQ(b.energy_cost, 0.0);
  EXPECT_EQ(b.demand_charge, 0.0);
  EXPECT_EQ(b.revenue, 0.0);
  EXPECT_EQ(b.profit, 0.0);
  const std::vector<double> neg{1.0, -1.0};
  EXPECT_THROW(bill(neg, 0.0, sce_tou4_summer(), 0.30), std::invalid_argument);
}

// Energy cost is additive over profiles; the demand charge is subadditive.
TEST(Bill, AdditivityProperty) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  const auto t = sce_tou4_summer();
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(288 * 2), b(a.size()), s(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = u(rng);
      b[i] = u(rng);
      s[i] = a[i] + b[i];
    }
    const auto ba = bill(a, 10.0, t, 0.3), bb = bill(b, 20.0, t, 0.3), bs = bill(s, 30.0, t, 0.3);
    EXPECT_NEAR(bs.energy_cost, ba.energy_cost + bb.energy_cost, 1e-9);
    EXPECT_NEAR(bs.revenue, ba.revenue + bb.revenue, 1e-12);
    EXPECT_LE(bs.demand_charge, ba.demand_charge + bb.demand_charge + 1e-9);
  }
}

TEST(Proxy, Arithmetic) {
  EXPECT_NEAR(demand_charge_proxy(15.51, 30, 0), 0.517, 1e-12);
  EXPECT_EQ(demand_charge_proxy(15.51, 30, 29), 15.51);
  EXPECT_NEAR(demand_charge_proxy(15.51, 30, 15), 2.0 * 15.51 / 30.0, 1e-12);
  EXPECT_THROW(demand_charge_proxy(15.51, 30, 30), std::invalid_argument);
}

TEST(Proxy, NondecreasingAndCapped) {
  double prev = 0.0;
  for (int d = 0; d < 30; ++d) {
    const double p = demand_charge_proxy(15.51, 30, d);
    EXPECT_GE(p, prev);
    EXPECT_LE(p, 15.51);
    prev = p;
  }
}

TEST(Hint, SeventyFivePercent) {
  EXPECT_EQ(peak_hint(100.0), 75.0);
  EXPECT_EQ(peak_hint(0.0), 0.0);
  EXPECT_EQ(peak_hint(std::nullopt), 0.0);
}

TEST(Units, AmpsToKw) { EXPECT_NEAR(amps_to_kw(100.0, 208.0), 20.8, 1e-12); }

}  // namespace
}  // namespace acn
