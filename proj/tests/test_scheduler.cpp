#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "acn/scheduler.hpp"
#include "support.hpp"

namespace acn {
namespace {

using testing::ev;
using testing::line_network;

UtilityConfig quick_charge() { return UtilityConfig{{{1.0, QuickCharge{}}, {1e-12, EqualShare{}}}}; }

struct Planned {
  BuiltProgram built;
  Solution sol;
};

Planned plan(const std::vector<EvState>& active, const UtilityConfig& u, const ChargingNetwork& net,
             PlanContext ctx = {}) {
  Planned out{build_opt(active, u, net, ctx), {}};
  out.sol = solve(out.built.program);
  return out;
}

TEST(ActiveSet, Membership) {
  std::vector<EvState> present{ev(0, 0.0, 5), ev(1, 5.0, 0), ev(2, 5.0, 3)};
  const auto a = active_set(present);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].evse, 2u);
}

TEST(Feedback, MeasuredEnergyOnly) {
  auto s = ev(0, 50.0, 10);
  apply_measurement(s, 32.0, 20.0);
  EXPECT_EQ(s.remaining_energy, 30.0);
  EXPECT_EQ(s.remaining_duration, 9);
  EXPECT_EQ(s.last_pilot, 32.0);
  EXPECT_EQ(s.last_measured, 20.0);
}

TEST(MakeState, FromSession) {
  const auto net = line_network(2, 64.0);
  const Session session{"a", "E1", 3, 10, 40.0, 0.0};
  const auto s = make_ev_state(session, net, 5);
  EXPECT_EQ(s.evse, 1u);
  EXPECT_EQ(s.remaining_duration, 5);
  EXPECT_EQ(s.pilot_upper_bound, 32.0);
}

TEST(BuildOpt, EmptyActiveSetRejected) {
  const auto net = line_network(1, 32.0);
  EXPECT_THROW(build_opt({}, quick_charge(), net, {}), std::invalid_argument);
}

TEST(BuildOpt, FrontLoadsUnderQuickCharge) {
  const auto net = line_network(1, 32.0);
  const auto p = plan({ev(0, 10.0, 2)}, quick_charge(), net);
  ASSERT_EQ(p.sol.status, SolveStatus::optimal);
  const auto r = p.built.rates(p.sol.x, 0);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_NEAR(r[0], 10.0, 1e-3);
  EXPECT_NEAR(r[1], 0.0, 1e-3);
}

TEST(BuildOpt, BoxBindsWhenRequestExceedsCapacity) {
  const auto net = line_network(1, 64.0);
  const auto p = plan({ev(0, 1000.0, 4)}, quick_charge(), net);
  ASSERT_EQ(p.sol.status, SolveStatus::optimal);
  for (double r : p.built.rates(p.sol.x, 0)) EXPECT_NEAR(r, 32.0, 1e-3);
}

TEST(BuildOpt, SymmetricSplit) {
  const auto net = line_network(2, 32.0);
  const auto p = plan({ev(0, 1000.0, 1), ev(1, 1000.0, 1)}, quick_charge(), net);
  ASSERT_EQ(p.sol.status, SolveStatus::optimal);
  EXPECT_NEAR(p.built.rates(p.sol.x, 0)[0], 16.0, 1e-3);
  EXPECT_NEAR(p.built.rates(p.sol.x, 1)[0], 16.0, 1e-3);
}

TEST(BuildOpt, ZeroAfterDeparture) {
  const auto net = line_network(2, 64.0);
  const auto p = plan({ev(0, 100.0, 2), ev(1, 1000.0, 6)}, quick_charge(), net);
  ASSERT_EQ(p.built.horizon, 6);
  const auto r = p.built.rates(p.sol.x, 0);
  for (int t = 2; t < 6; ++t) {
    EXPECT_EQ(p.built.var(0, t), -1);
    EXPECT_EQ(r[static_cast<std::size_t>(t)], 0.0);
  }
}

TEST(BuildOpt, QuantizedMinimumRateOnFirstPeriod) {
  const auto net = line_network(1, 32.0, {0, 8, 16, 24, 32});
  PlanContext ctx;
  ctx.mode = PilotMode::quantized;
  // Equal sharing alone would pick zero everywhere.
  const auto p = plan({ev(0, 100.0, 4)}, UtilityConfig{{{1.0, EqualShare{}}}}, net, ctx);
  ASSERT_EQ(p.sol.status, SolveStatus::optimal);
  EXPECT_NEAR(p.built.rates(p.sol.x, 0)[0], 8.0, 1e-4);
}

TEST(BuildOpt, PlanRespectsLimitsAndEnergy) {
  const auto net = caltech_preset(50.0);
  std::mt19937_64 rng(4);
  std::vector<EvState> active;
  for (std::size_t i = 0; i < net.evse_count(); i += 3)
    active.push_back(ev(i, 50.0 + static_cast<double>(rng() % 300), 5 + static_cast<int>(rng() % 20)));
  const auto p = plan(active, quick_charge(), net);
  ASSERT_EQ(p.sol.status, SolveStatus::optimal);
  for (int t = 0; t < p.built.horizon; ++t) {
    std::vector<double> rates(net.evse_count(), 0.0);
    for (std::size_t i = 0; i < active.size(); ++i) rates[active[i].evse] = p.built.rates(p.sol.x, i)[static_cast<std::size_t>(t)];
    EXPECT_TRUE(soc_feasible(net, rates, t, 1e-3)) << "period " << t;
  }
  for (std::size_t i = 0; i < active.size(); ++i) {
    const auto r = p.built.rates(p.sol.x, i);
    EXPECT_LE(std::accumulate(r.begin(), r.end(), 0.0), active[i].remaining_energy + 1e-3);
    for (double x : r) {
      EXPECT_GE(x, -1e-6);
      EXPECT_LE(x, 32.0 + 1e-6);
    }
  }
}

// Property: with dominant non-completion weight, every satisfiable request is met.
TEST(BuildOpt, NonCompletionTightness) {
  const auto net = line_network(3, 40.0);
  for (int order : {1, 2}) {
    UtilityConfig u{{{1.0, EqualShare{}}, {100.0, NonCompletion{order}}}};
    std::vector<EvState> active{ev(0, 20.0, 4), ev(1, 35.0, 5), ev(2, 12.0, 3)};
    const auto p = plan(active, u, net);
    ASSERT_EQ(p.sol.status, SolveStatus::optimal);
    for (std::size_t i = 0; i < active.size(); ++i) {
      const auto r = p.built.rates(p.sol.x, i);
      EXPECT_NEAR(std::accumulate(r.begin(), r.end(), 0.0), active[i].remaining_energy, 1e-3) << "p=" << order;
    }
  }
}

double quick_charge_value(const std::vector<double>& r) {
  const double T = static_cast<double>(r.size());
  double v = 0.0;
  for (std::size_t t = 0; t < r.size(); ++t) v += (T - static_cast<double>(t)) / T * r[t];
  return v;
}

// Property: the epigraph variable prices exactly max(max_t N(t), floor).
TEST(BuildOpt, DemandChargeEpigraphValue) {
  const auto net = line_network(1, 32.0);
  const double kw_per_amp = PeriodConfig{}.voltage / 1000.0;
  for (double hint_kw : {0.0, 40.0 * kw_per_amp}) {
    DemandCharge dc;
    dc.rate_per_kw = 1.0;
    dc.dynamic_proxy = false;
    dc.hint_kw = hint_kw;
    UtilityConfig u{{{1e-3, QuickCharge{}}, {1.0, dc}, {10.0, NonCompletion{1}}}};
    const auto p = plan({ev(0, 60.0, 6)}, u, net);
    ASSERT_EQ(p.sol.status, SolveStatus::optimal);
    const auto r = p.built.rates(p.sol.x, 0);
    const double peak = std::max(*std::max_element(r.begin(), r.end()), hint_kw / kw_per_amp);
    // Non-completion contributes zero once the request is met.
    ASSERT_NEAR(std::accumulate(r.begin(), r.end(), 0.0), 60.0, 1e-3);
    EXPECT_NEAR(p.sol.objective, 1e-3 * quick_charge_value(r) - kw_per_amp * peak, 1e-3);
    if (hint_kw == 0.0) {
      // Flattening minimises the peak: 10 A for six periods.
      for (double x : r) EXPECT_NEAR(x, 10.0, 1e-2);
    } else {
      // A floor above any reachable peak leaves quick charging in charge.
      EXPECT_NEAR(r[0], 32.0, 1e-2);
      EXPECT_NEAR(r[1], 28.0, 1e-2);
    }
  }
}

TEST(BuildOpt, EqualShareMakesSolutionUnique) {
  const auto net = caltech_preset(60.0);
  std::vector<EvState> active;
  for (std::size_t i = 0; i < net.evse_count(); i += 2) active.push_back(ev(i, 200.0, 12));
  const auto a = plan(active, quick_charge(), net);
  // A tighter re-solve lands on the same point within 10 tol.
  const auto b = solve(a.built.program, SolverOptions{1e-5, 50, 200});
  ASSERT_EQ(a.sol.status, SolveStatus::optimal);
  for (std::size_t j = 0; j < a.sol.x.size(); ++j) EXPECT_NEAR(a.sol.x[j], b.x[j], 1e-3);
}

TEST(Quantize, WorkedExample) {
  const auto net = line_network(2, 31.0, {0, 8, 16, 24, 32});
  const std::vector<double> r{15.5, 15.5};
  const std::vector<std::size_t> evse{0, 1};
  const std::vector<RateSet> sets{net.evses[0].rate_set(), net.evses[1].rate_set()};
  const auto q = quantize_and_reclaim(r, evse, net, sets, 0);
  EXPECT_EQ(q, (std::vector<double>{16.0, 8.0}));
}

TEST(Quantize, FixedPointAndContinuousIdentity) {
  const auto net = line_network(2, 64.0, {0, 8, 16, 24, 32});
  const std::vector<std::size_t> evse{0, 1};
  const std::vector<RateSet> sets{net.evses[0].rate_set(), net.evses[1].rate_set()};
  const std::vector<double> on_grid{24.0, 8.0};
  EXPECT_EQ(quantize_and_reclaim(on_grid, evse, net, sets, 0), on_grid);

  const auto cont = line_network(2, 64.0);
  const std::vector<RateSet> csets{cont.evses[0].rate_set(), cont.evses[1].rate_set()};
  const std::vector<double> r{13.37, 7.25};
  const auto q = quantize_and_reclaim(r, evse, cont, csets, 0);
  EXPECT_NEAR(q[0], r[0], 1e-12);
  EXPECT_NEAR(q[1], r[1], 1e-12);
}

TEST(Quantize, NeverRoundsUpSolverNoise) {
  const auto net = line_network(2, 64.0, {0, 8, 16, 24, 32});
  const std::vector<std::size_t> evse{0, 1};
  const std::vector<RateSet> sets{net.evses[0].rate_set(), net.evses[1].rate_set()};
  const std::vector<double> r{16.0 - 1e-10, 16.0 + 2e-10};
  const auto q = quantize_and_reclaim(r, evse, net, sets, 0);
  EXPECT_LE(q[0] + q[1], r[0] + r[1] + 1e-9);
  EXPECT_EQ(q, (std::vector<double>{16.0, 16.0}));
  const std::vector<double> low{16.0 - 1e-9, 16.0 - 1e-9};
  const auto ql = quantize_and_reclaim(low, evse, net, sets, 0);
  EXPECT_LE(ql[0] + ql[1], low[0] + low[1] + 1e-9);
}

TEST(Solve, ReturnsActiveBoundsExactly) {
  const auto net = line_network(1, 64.0);
  const auto p = plan({ev(0, 1000.0, 3)}, quick_charge(), net);
  for (double r : p.built.rates(p.sol.x, 0)) EXPECT_EQ(r, 32.0);
}

// Property: pilots lie in their sets, stay feasible, and never exceed the continuous total.
TEST(Quantize, RandomFeasibleInputs) {
  const auto net = caltech_preset(40.0);
  std::vector<std::size_t> evse(net.evse_count());
  std::iota(evse.begin(), evse.end(), 0);
  std::vector<RateSet> sets;
  for (const auto& e : net.evses) sets.push_back(e.rate_set());
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 32.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> r(evse.size());
    for (double& x : r) x = u(rng);
    shrink_to_feasible(r, evse, net, 0, ConstraintMode::soc);
    const auto q = quantize_and_reclaim(r, evse, net, sets, 0);
    for (std::size_t i = 0; i < q.size(); ++i) EXPECT_TRUE(sets[i].contains(q[i]));
    EXPECT_TRUE(soc_feasible(net, q, 0));
    EXPECT_LE(std::accumulate(q.begin(), q.end(), 0.0), std::accumulate(r.begin(), r.end(), 0.0) + 1e-9);
  }
}

TEST(Shrink, ScalesIntoFeasibility) {
  const auto net = line_network(2, 30.0);
  std::vector<double> r{20.0, 40.0};
  const std::vector<std::size_t> evse{0, 1};
  const double s = shrink_to_feasible(r, evse, net, 0, ConstraintMode::soc);
  EXPECT_NEAR(s, 0.5, 1e-6);
  EXPECT_TRUE(soc_feasible(net, r, 0));
}

TEST(Rampdown, WorkedExamples) {
  const RampdownParams params;
  EXPECT_EQ(rampdown_update(32.0, 20.0, 32.0, params, 32.0), 21.0);
  EXPECT_EQ(rampdown_update(21.0, 20.5, 21.0, params, 32.0), 22.0);
  EXPECT_EQ(rampdown_update(16.0, 16.0, 32.0, params, 32.0), 32.0);
  EXPECT_EQ(rampdown_update(32.0, 31.5, 32.0, params, 32.0), 32.0);
}

TEST(Utility, JsonRoundTrip) {
  DemandCharge dc;
  dc.hint_kw = 12.5;
  EnergyCost ec;
  ec.price_per_kwh = {0.1, 0.2};
  UtilityConfig u{{{1.0, ec}, {1.0, dc}, {1e-4, QuickCharge{}}, {2.0, NonCompletion{2}}}};
  const auto back = utility_from_json(utility_to_json(u));
  ASSERT_EQ(back.terms.size(), 4u);
  EXPECT_EQ(back.find<DemandCharge>()->hint_kw, 12.5);
  EXPECT_EQ(back.find<EnergyCost>()->price_per_kwh, ec.price_per_kwh);
  EXPECT_EQ(back.find<NonCompletion>()->order, 2);
  EXPECT_EQ(utility_to_json(back), utility_to_json(u));
}

TEST(Utility, NegativeWeightRejected) {
  UtilityConfig u{{{-1.0, QuickCharge{}}}};
  EXPECT_THROW(u.validate(), std::invalid_argument);
}

AsaOptions asa_options(int recompute_period) {
  AsaOptions o;
  o.utility = quick_charge();
  o.recompute_period = recompute_period;
  return o;
}

TEST(Asa, RecomputesEveryPeriodByDefault) {
  const auto net = line_network(2, 32.0);
  AdaptiveScheduler asa(net, asa_options(1));
  std::vector<EvState> present{ev(0, 100.0, 10), ev(1, 100.0, 10)};
  asa.step(present, 0, true);
  asa.step(present, 1, false);
  EXPECT_EQ(asa.stats().solves, 2);
}

TEST(Asa, TimerAndEvents) {
  const auto net = line_network(2, 32.0);
  AdaptiveScheduler asa(net, asa_options(3));
  std::vector<EvState> present{ev(0, 100.0, 10), ev(1, 100.0, 10)};
  asa.step(present, 0, true);
  asa.step(present, 1, false);
  EXPECT_EQ(asa.stats().solves, 1);
  asa.step(present, 2, true);
  EXPECT_EQ(asa.stats().solves, 2);
  asa.step(present, 5, false);
  EXPECT_EQ(asa.stats().solves, 3);
}

TEST(Asa, PilotsFollowStoredSchedule) {
  const auto net = line_network(1, 32.0);
  AdaptiveScheduler asa(net, asa_options(5));
  std::vector<EvState> present{ev(0, 40.0, 4)};
  const auto first = asa.step(present, 0, true);
  EXPECT_NEAR(first[0], 32.0, 1e-3);
  apply_measurement(present[0], first[0], first[0]);
  const auto second = asa.step(present, 1, false);
  EXPECT_EQ(asa.stats().solves, 1);
  EXPECT_NEAR(second[0], 8.0, 1e-3);
}

TEST(Asa, InactiveEvsGetZero) {
  const auto net = line_network(2, 32.0);
  AdaptiveScheduler asa(net, asa_options(1));
  std::vector<EvState> present{ev(0, 0.0, 10), ev(1, 100.0, 10)};
  const auto pilots = asa.step(present, 0, true);
  EXPECT_EQ(pilots[0], 0.0);
  EXPECT_NEAR(pilots[1], 32.0, 1e-3);
}

// Ideal feedback: remaining energy falls by exactly the first-period rate.
TEST(Asa, MonotoneFeedback) {
  const auto net = line_network(3, 40.0);
  AdaptiveScheduler asa(net, asa_options(1));
  std::vector<EvState> present{ev(0, 60.0, 8), ev(1, 90.0, 6), ev(2, 30.0, 4)};
  for (int k = 0; k < 4; ++k) {
    const auto pilots = asa.step(present, k, k == 0);
    EXPECT_LE(std::accumulate(pilots.begin(), pilots.end(), 0.0), 40.0 + 1e-3);
    for (std::size_t i = 0; i < present.size(); ++i) {
      const double before = present[i].remaining_energy;
      apply_measurement(present[i], pilots[i], pilots[i]);
      EXPECT_NEAR(before - present[i].remaining_energy, pilots[i], 1e-12);
    }
  }
}

TEST(Asa, QuantizedFallbackWhenMinimumRatesInfeasible) {
  const auto net = line_network(5, 18.0, {0, 6, 8, 16, 32});
  AsaOptions o = asa_options(1);
  o.mode = PilotMode::quantized;
  AdaptiveScheduler asa(net, o);
  std::vector<EvState> present;
  for (std::size_t i = 0; i < 5; ++i) present.push_back(ev(i, 100.0, 10));
  const auto pilots = asa.step(present, 0, true);
  EXPECT_EQ(asa.stats().fallbacks, 1);
  EXPECT_EQ(std::count(pilots.begin(), pilots.end(), 6.0), 3);
  EXPECT_EQ(std::count(pilots.begin(), pilots.end(), 0.0), 2);
}

}  // namespace
}  // namespace acn
