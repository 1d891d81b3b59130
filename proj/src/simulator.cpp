#include "acn/simulator.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <stdexcept>

#include <fmt/core.h>

#include "acn/baselines.hpp"

namespace acn {

Scenario scenario_preset(const std::string& name) {
  if (name == "I") return {"I", true, true, true};
  if (name == "II") return {"II", false, true, true};
  if (name == "III") return {"III", false, false, true};
  if (name == "IV") return {"IV", false, true, false};
  if (name == "V") return {"V", false, false, false};
  throw std::invalid_argument(fmt::format("unknown scenario '{}'", name));
}

ChargingNetwork with_continuous_evses(const ChargingNetwork& network) {
  ChargingNetwork out = network;
  for (auto& e : out.evses) {
    e.continuous = true;
    e.min_nonzero_rate = 0.0;
  }
  return out;
}

AlgorithmKind algorithm_kind_from_string(const std::string& s) {
  if (s == "asa") return AlgorithmKind::asa;
  if (s == "llf") return AlgorithmKind::llf;
  if (s == "edf") return AlgorithmKind::edf;
  if (s == "rr") return AlgorithmKind::rr;
  if (s == "uncontrolled") return AlgorithmKind::uncontrolled;
  throw std::invalid_argument(fmt::format("unknown algorithm kind '{}'", s));
}

std::string to_string(AlgorithmKind k) {
  switch (k) {
    case AlgorithmKind::asa: return "asa";
    case AlgorithmKind::llf: return "llf";
    case AlgorithmKind::edf: return "edf";
    case AlgorithmKind::rr: return "rr";
    case AlgorithmKind::uncontrolled: return "uncontrolled";
  }
  return "unknown";
}

double SimResult::requested_total() const {
  double s = 0.0;
  for (const auto& t : sessions) s += t.requested;
  return s;
}

double SimResult::delivered_total() const {
  double s = 0.0;
  for (const auto& t : sessions) s += t.delivered;
  return s;
}

std::vector<double> SimResult::load_kw() const {
  std::vector<double> out(load_amps.size());
  for (std::size_t k = 0; k < load_amps.size(); ++k) out[k] = amps_to_kw(load_amps[k], period_config.voltage);
  return out;
}

double demand_met(const SimResult& result) {
  double req = result.requested_total();
  return req > 0.0 ? result.delivered_total() / req : 0.0;
}

namespace {

using PilotFn = std::function<std::vector<double>(std::span<const EvState>, int, bool, double)>;

struct LoopConfig {
  std::string algorithm;
  std::string scenario;
  bool controlled = true;
  BatteryModel battery = BatteryModel::ideal;
  bool rampdown = false;
};

SimResult simulate(const ChargingNetwork& network, std::span<const Session> sessions, const PilotFn& pilots_for,
                   const LoopConfig& loop, const SimOptions& options) {
  std::vector<Session> sorted(sessions.begin(), sessions.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const Session& a, const Session& b) {
    return a.arrival != b.arrival ? a.arrival < b.arrival : a.id < b.id;
  });
  validate_sessions(sorted, network);

  SimResult res;
  res.algorithm = loop.algorithm;
  res.scenario = loop.scenario;
  res.period_config = options.periods;
  res.audited = loop.controlled;
  int end = 0;
  for (const auto& s : sorted) end = std::max(end, s.departure);
  res.periods = end;
  res.load_amps.assign(static_cast<std::size_t>(end), 0.0);
  res.constraint_magnitude.assign(network.constraints.size(), std::vector<double>(static_cast<std::size_t>(end), 0.0));
  for (const auto& c : network.constraints) res.constraint_ids.push_back(c.id);
  for (const auto& s : sorted) {
    SessionTrace tr;
    tr.session_id = s.id;
    tr.evse_id = s.evse_id;
    tr.arrival = s.arrival;
    tr.departure = s.departure;
    tr.requested = s.requested_energy;
    tr.pilot.assign(static_cast<std::size_t>(s.duration()), 0.0);
    tr.measured.assign(static_cast<std::size_t>(s.duration()), 0.0);
    res.sessions.push_back(std::move(tr));
  }

  std::vector<EvState> present;
  std::vector<BatteryState> batteries;
  std::vector<std::size_t> trace_of;
  std::size_t next = 0;
  double peak_kw = 0.0;
  std::vector<double> rates(network.evse_count(), 0.0);
  std::vector<double> measured_rates(network.evse_count(), 0.0);

  for (int k = 0; k < end; ++k) {
    bool event = false;
    for (std::size_t i = present.size(); i-- > 0;) {
      if (present[i].departure > k) continue;
      present.erase(present.begin() + static_cast<std::ptrdiff_t>(i));
      batteries.erase(batteries.begin() + static_cast<std::ptrdiff_t>(i));
      trace_of.erase(trace_of.begin() + static_cast<std::ptrdiff_t>(i));
      event = true;
    }
    while (next < sorted.size() && sorted[next].arrival <= k) {
      const Session& s = sorted[next];
      present.push_back(make_ev_state(s, network, k));
      batteries.push_back(
          fit_to_session(s, network.evses[present.back().evse].max_pilot, loop.battery, options.tail_start_soc));
      trace_of.push_back(next);
      ++next;
      event = true;
    }
    if (present.empty()) continue;

    std::vector<double> pilots = pilots_for(present, k, event, peak_kw);
    std::fill(rates.begin(), rates.end(), 0.0);
    std::fill(measured_rates.begin(), measured_rates.end(), 0.0);
    for (std::size_t i = 0; i < present.size(); ++i) {
      if (present[i].remaining_energy <= kEnergyEps) pilots[i] = 0.0;
      pilots[i] = std::max(0.0, pilots[i]);
      rates[present[i].evse] = pilots[i];
    }
    if (loop.controlled) {
      auto ok = check_soc_feasible(network, rates, k, options.audit_tol);
      res.audit_violations += static_cast<int>(std::count(ok.begin(), ok.end(), false));
    }

    double load = 0.0;
    for (std::size_t i = 0; i < present.size(); ++i) {
      BatteryResponse r = response(batteries[i], pilots[i]);
      batteries[i] = r.state;
      double drawn = std::min(r.drawn, present[i].remaining_energy);
      SessionTrace& tr = res.sessions[trace_of[i]];
      auto slot = static_cast<std::size_t>(k - tr.arrival);
      tr.pilot[slot] = pilots[i];
      tr.measured[slot] = drawn;
      tr.delivered += drawn;
      measured_rates[present[i].evse] = drawn;
      load += drawn;
      double bound = present[i].pilot_upper_bound;
      apply_measurement(present[i], pilots[i], drawn);
      if (loop.rampdown)
        present[i].pilot_upper_bound = rampdown_update(pilots[i], drawn, bound, options.rampdown,
                                                       network.evses[present[i].evse].max_pilot);
    }
    res.load_amps[static_cast<std::size_t>(k)] = load;
    for (std::size_t l = 0; l < network.constraints.size(); ++l)
      res.constraint_magnitude[l][static_cast<std::size_t>(k)] = std::abs(aggregate_phasor(network, l, measured_rates, k));
    peak_kw = std::max(peak_kw, amps_to_kw(load, options.periods.voltage));
  }

  if (options.tariff) {
    BillingWindow window{options.start_day, options.periods.period_minutes, options.demand_charge_fraction};
    double delivered_kwh = res.delivered_total() * options.periods.kwh_per_amp_period();
    res.billing = bill(res.load_kw(), delivered_kwh, *options.tariff, options.revenue_per_kwh, window);
  }
  return res;
}

std::vector<double> baseline_pilots(AlgorithmKind kind, std::span<const EvState> present,
                                    const ChargingNetwork& network, int k, ConstraintMode mode) {
  std::vector<std::size_t> idx;
  std::vector<EvState> active;
  for (std::size_t i = 0; i < present.size(); ++i)
    if (present[i].remaining_energy > kEnergyEps && present[i].remaining_duration > 0) {
      idx.push_back(i);
      active.push_back(present[i]);
    }
  std::vector<double> out(present.size(), 0.0);
  if (active.empty()) return out;
  std::vector<double> p;
  switch (kind) {
    case AlgorithmKind::llf: p = llf_schedule(active, network, k, mode); break;
    case AlgorithmKind::edf: p = edf_schedule(active, network, k, mode); break;
    case AlgorithmKind::rr: p = rr_schedule(active, network, k, mode); break;
    case AlgorithmKind::uncontrolled: p = uncontrolled(active, network); break;
    case AlgorithmKind::asa: throw std::logic_error("baseline_pilots called for asa");
  }
  for (std::size_t a = 0; a < idx.size(); ++a) out[idx[a]] = p[a];
  return out;
}

}  // namespace

SimResult run(const ChargingNetwork& network, std::span<const Session> sessions, const AlgorithmSpec& algorithm,
              const Scenario& scenario, const SimOptions& options) {
  if (scenario.perfect_information) {
    if (algorithm.kind != AlgorithmKind::asa)
      throw std::invalid_argument("perfect information requires an optimizing algorithm");
    SimResult r = offline_optimal(network, sessions, algorithm.utility, options);
    r.algorithm = algorithm.name;
    return r;
  }
  const ChargingNetwork net = scenario.continuous_evse ? with_continuous_evses(network) : network;
  LoopConfig loop;
  loop.algorithm = algorithm.name;
  loop.scenario = scenario.name;
  loop.controlled = algorithm.kind != AlgorithmKind::uncontrolled;
  loop.battery = scenario.ideal_battery ? BatteryModel::ideal : BatteryModel::two_stage;
  loop.rampdown = options.rampdown_enabled.value_or(!scenario.ideal_battery);

  if (algorithm.kind == AlgorithmKind::asa) {
    AsaOptions asa;
    asa.utility = algorithm.utility;
    asa.max_horizon = options.max_horizon;
    asa.recompute_period = options.recompute_period;
    asa.mode = scenario.continuous_evse ? PilotMode::continuous : PilotMode::quantized;
    asa.constraint_mode = options.constraint_mode;
    asa.solver = options.solver;
    asa.periods = options.periods;
    AdaptiveScheduler scheduler(net, asa);
    PilotFn fn = [&](std::span<const EvState> present, int k, bool event, double peak) {
      return scheduler.step(present, k, event, peak);
    };
    SimResult r = simulate(net, sessions, fn, loop, options);
    r.solver_stats = scheduler.stats();
    return r;
  }
  PilotFn fn = [&](std::span<const EvState> present, int k, bool, double) {
    return baseline_pilots(algorithm.kind, present, net, k, options.constraint_mode);
  };
  return simulate(net, sessions, fn, loop, options);
}

SimResult offline_optimal(const ChargingNetwork& network, std::span<const Session> sessions,
                          const UtilityConfig& utility, const SimOptions& options) {
  const ChargingNetwork net = with_continuous_evses(network);
  LoopConfig loop;
  loop.algorithm = "offline-optimal";
  loop.scenario = "I";
  std::map<std::string, std::vector<double>> plan;
  AsaStats stats;
  std::vector<EvState> evs;
  int end = 0;
  for (const auto& s : sessions) {
    evs.push_back(make_ev_state(s, net, 0));
    end = std::max(end, s.departure);
  }
  if (!evs.empty()) {
    UtilityConfig full = utility;
    for (auto& t : full.terms)
      if (auto* dc = std::get_if<DemandCharge>(&t.component)) dc->dynamic_proxy = false;
    PlanContext ctx;
    ctx.k = 0;
    ctx.max_horizon = end;
    ctx.periods = options.periods;
    ctx.constraint_mode = options.constraint_mode;
    ctx.limit_margin = 2.0 * options.solver.tol;
    BuiltProgram built = build_opt(evs, full, net, ctx);
    Solution sol = solve(built.program, options.solver);
    stats.solves = 1;
    if (sol.status == SolveStatus::infeasible) stats.infeasible = 1;
    if (sol.status == SolveStatus::max_iter) stats.max_iter = 1;
    for (std::size_t i = 0; i < evs.size(); ++i) plan[evs[i].session_id] = built.rates(sol.x, i);
  }
  PilotFn fn = [&](std::span<const EvState> present, int k, bool, double) {
    std::vector<double> out(present.size(), 0.0);
    std::vector<std::size_t> evse(present.size());
    for (std::size_t i = 0; i < present.size(); ++i) {
      evse[i] = present[i].evse;
      const auto& r = plan.at(present[i].session_id);
      if (k < static_cast<int>(r.size()))
        out[i] = std::clamp(r[static_cast<std::size_t>(k)], 0.0, net.evses[evse[i]].max_pilot);
    }
    shrink_to_feasible(out, evse, net, k, options.constraint_mode);
    return out;
  };
  SimResult r = simulate(net, sessions, fn, loop, options);
  r.solver_stats = stats;
  return r;
}

nlohmann::json summary_json(const SimResult& r) {
  const double kwh = r.period_config.kwh_per_amp_period();
  nlohmann::json j{{"algorithm", r.algorithm},
                   {"scenario", r.scenario},
                   {"periods", r.periods},
                   {"sessions", r.sessions.size()},
                   {"requested_kwh", r.requested_total() * kwh},
                   {"delivered_kwh", r.delivered_total() * kwh},
                   {"demand_met", demand_met(r)},
                   {"audited", r.audited},
                   {"audit_violations", r.audit_violations},
                   {"solves", r.solver_stats.solves},
                   {"infeasible_solves", r.solver_stats.infeasible},
                   {"fallbacks", r.solver_stats.fallbacks},
                   {"max_iter_solves", r.solver_stats.max_iter}};
  if (r.billing) {
    j["billing"] = {{"energy_cost", r.billing->energy_cost},
                    {"demand_charge", r.billing->demand_charge},
                    {"revenue", r.billing->revenue},
                    {"profit", r.billing->profit},
                    {"peak_kw", r.billing->peak_kw}};
  }
  return j;
}

std::string traces_csv(const SimResult& r) {
  std::string out = "period,session_id,evse_id,pilot,measured\n";
  for (const auto& s : r.sessions)
    for (std::size_t i = 0; i < s.pilot.size(); ++i)
      out += fmt::format("{},{},{},{},{}\n", s.arrival + static_cast<int>(i), s.session_id, s.evse_id, s.pilot[i],
                         s.measured[i]);
  return out;
}

std::string load_csv(const SimResult& r) {
  std::string out = "period,load_amps,load_kw";
  for (const auto& id : r.constraint_ids) out += "," + id;
  out += '\n';
  auto kw = r.load_kw();
  for (std::size_t k = 0; k < r.load_amps.size(); ++k) {
    out += fmt::format("{},{},{}", k, r.load_amps[k], kw[k]);
    for (const auto& c : r.constraint_magnitude) out += fmt::format(",{}", c[k]);
    out += '\n';
  }
  return out;
}

}  // namespace acn
