#include "acn/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/core.h>

#include "acn/baselines.hpp"
#include "acn/qp.hpp"

namespace acn {

// State ----------------------------------------------------------------------

EvState make_ev_state(const Session& session, const ChargingNetwork& network, int k) {
  EvState ev;
  ev.session_id = session.id;
  ev.evse = network.evse_index(session.evse_id);
  ev.arrival = session.arrival;
  ev.departure = session.departure;
  ev.requested_energy = session.requested_energy;
  ev.remaining_energy = session.requested_energy;
  ev.remaining_duration = session.departure - k;
  ev.pilot_upper_bound = network.evses[ev.evse].max_pilot;
  return ev;
}

std::vector<EvState> active_set(std::span<const EvState> present) {
  std::vector<EvState> out;
  for (const auto& ev : present)
    if (ev.remaining_energy > kEnergyEps && ev.remaining_duration > 0) out.push_back(ev);
  return out;
}

void apply_measurement(EvState& ev, double pilot, double measured) {
  ev.remaining_energy = std::max(0.0, ev.remaining_energy - measured);
  ev.remaining_duration -= 1;
  ev.last_pilot = pilot;
  ev.last_measured = measured;
}

// Utility ------------------------------------------------------------------------

namespace {

double series_at(const std::vector<double>& s, int k) {
  if (s.empty()) return 0.0;
  if (k < 0) return s.front();
  return s[std::min(static_cast<std::size_t>(k), s.size() - 1)];
}

}  // namespace

double EnergyCost::price_at(int k) const { return series_at(price_per_kwh, k); }
double EnergyCost::other_load_at(int k) const { return series_at(other_load, k); }
double EnergyCost::generation_at(int k) const { return series_at(generation, k); }

void UtilityConfig::validate() const {
  if (terms.empty()) throw std::invalid_argument("utility: no components");
  for (const auto& t : terms) {
    if (!(t.weight > 0.0)) throw std::invalid_argument("utility: weights must be > 0");
    if (const auto* nc = std::get_if<NonCompletion>(&t.component); nc && nc->order != 1 && nc->order != 2)
      throw std::invalid_argument("utility: non-completion order must be 1 or 2");
    if (const auto* dc = std::get_if<DemandCharge>(&t.component)) {
      if (dc->billing_days <= 0) throw std::invalid_argument("utility: billing_days must be > 0");
      if (dc->rate_per_kw < 0.0 || dc->prior_peak_kw < 0.0 || dc->hint_kw < 0.0)
        throw std::invalid_argument("utility: demand charge parameters must be >= 0");
    }
  }
}

std::string component_name(const UtilityComponent& c) {
  struct Visitor {
    std::string operator()(const QuickCharge&) const { return "quick_charge"; }
    std::string operator()(const EnergyCost&) const { return "energy_cost"; }
    std::string operator()(const DemandCharge&) const { return "demand_charge"; }
    std::string operator()(const LoadVariation&) const { return "load_variation"; }
    std::string operator()(const EqualShare&) const { return "equal_share"; }
    std::string operator()(const NonCompletion&) const { return "non_completion"; }
  };
  return std::visit(Visitor{}, c);
}

nlohmann::json utility_to_json(const UtilityConfig& u) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : u.terms) {
    nlohmann::json j{{"component", component_name(t.component)}, {"weight", t.weight}};
    if (const auto* ec = std::get_if<EnergyCost>(&t.component)) {
      j["revenue_per_kwh"] = ec->revenue_per_kwh;
      if (!ec->price_per_kwh.empty()) j["price_per_kwh"] = ec->price_per_kwh;
      if (!ec->other_load.empty()) j["other_load"] = ec->other_load;
      if (!ec->generation.empty()) j["generation"] = ec->generation;
    } else if (const auto* dc = std::get_if<DemandCharge>(&t.component)) {
      j["rate_per_kw"] = dc->rate_per_kw;
      j["billing_days"] = dc->billing_days;
      j["dynamic_proxy"] = dc->dynamic_proxy;
      j["prior_peak_kw"] = dc->prior_peak_kw;
      j["hint_kw"] = dc->hint_kw;
    } else if (const auto* nc = std::get_if<NonCompletion>(&t.component)) {
      j["order"] = nc->order;
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

UtilityConfig utility_from_json(const nlohmann::json& j) {
  UtilityConfig u;
  for (const auto& e : j) {
    UtilityTerm t;
    t.weight = e.value("weight", 1.0);
    std::string name = e.at("component").get<std::string>();
    if (name == "quick_charge") {
      t.component = QuickCharge{};
    } else if (name == "energy_cost") {
      EnergyCost ec;
      ec.revenue_per_kwh = e.value("revenue_per_kwh", ec.revenue_per_kwh);
      ec.price_per_kwh = e.value("price_per_kwh", std::vector<double>{});
      ec.other_load = e.value("other_load", std::vector<double>{});
      ec.generation = e.value("generation", std::vector<double>{});
      t.component = std::move(ec);
    } else if (name == "demand_charge") {
      DemandCharge dc;
      dc.rate_per_kw = e.value("rate_per_kw", dc.rate_per_kw);
      dc.billing_days = e.value("billing_days", dc.billing_days);
      dc.dynamic_proxy = e.value("dynamic_proxy", dc.dynamic_proxy);
      dc.prior_peak_kw = e.value("prior_peak_kw", dc.prior_peak_kw);
      dc.hint_kw = e.value("hint_kw", dc.hint_kw);
      t.component = dc;
    } else if (name == "load_variation") {
      t.component = LoadVariation{};
    } else if (name == "equal_share") {
      t.component = EqualShare{};
    } else if (name == "non_completion") {
      t.component = NonCompletion{e.value("order", 1)};
    } else {
      throw std::invalid_argument(fmt::format("utility: unknown component '{}'", name));
    }
    u.terms.push_back(std::move(t));
  }
  u.validate();
  return u;
}

// Program assembly -------------------------------------------------------------

namespace {

constexpr double kPinnedEnergySlack = 1e-3;

}  // namespace

int plan_horizon(std::span<const EvState> active, int max_horizon) {
  int longest = 0;
  for (const auto& ev : active) longest = std::max(longest, ev.remaining_duration);
  return std::max(1, std::min(max_horizon, longest));
}

BuiltProgram build_opt(std::span<const EvState> active, const UtilityConfig& utility,
                       const ChargingNetwork& network, const PlanContext& ctx) {
  if (active.empty()) throw std::invalid_argument("build_opt: empty active set");
  if (ctx.max_horizon <= 0) throw std::invalid_argument("build_opt: horizon must be > 0");
  utility.validate();

  BuiltProgram out;
  const int T = plan_horizon(active, ctx.max_horizon);
  const std::size_t n_ev = active.size();
  out.horizon = T;
  out.ev_count = n_ev;
  out.first.resize(n_ev);
  out.last.resize(n_ev);
  out.offset.resize(n_ev);
  int n_vars = 0;
  for (std::size_t i = 0; i < n_ev; ++i) {
    out.first[i] = std::clamp(active[i].arrival - ctx.k, 0, T);
    out.last[i] = std::max(out.first[i], std::min(active[i].remaining_duration, T));
    out.offset[i] = n_vars;
    n_vars += out.last[i] - out.first[i];
  }
  ConvexProgram& p = out.program;
  p = ConvexProgram(n_vars);
  auto at = [](int v) { return static_cast<std::size_t>(v); };

  // EVs plugged in at each relative period.
  std::vector<std::vector<std::size_t>> present(static_cast<std::size_t>(T));
  for (std::size_t i = 0; i < n_ev; ++i)
    for (int t = out.first[i]; t < out.last[i]; ++t) present[at(t)].push_back(i);

  for (std::size_t i = 0; i < n_ev; ++i) {
    const EvState& ev = active[i];
    const Evse& evse = network.evses[ev.evse];
    const double ub = std::min(ev.pilot_upper_bound, evse.max_pilot);
    for (int t = out.first[i]; t < out.last[i]; ++t) {
      p.lower[at(out.var(i, t))] = 0.0;
      p.upper[at(out.var(i, t))] = ub;
    }
    if (out.first[i] == out.last[i]) continue;
    double energy_cap = ev.remaining_energy;
    if (ctx.mode == PilotMode::quantized && out.first[i] == 0) {
      double min_rate = evse.rate_set().min_nonzero();
      if (min_rate > 0.0) {
        auto v0 = at(out.var(i, 0));
        p.lower[v0] = min_rate;
        p.upper[v0] = std::max(p.upper[v0], min_rate);
        energy_cap = std::max(energy_cap, min_rate);
        // A request the minimum rate already covers leaves no interior; pin it.
        if (energy_cap <= min_rate + kPinnedEnergySlack) {
          p.lower[v0] = p.upper[v0] = min_rate;
          for (int t = 1; t < out.last[i]; ++t) p.upper[at(out.var(i, t))] = 0.0;
          continue;
        }
      }
    }
    LinearInequality energy;
    for (int t = out.first[i]; t < out.last[i]; ++t) energy.expr.add(out.var(i, t), 1.0);
    energy.rhs = energy_cap;
    p.linear_ineqs.push_back(std::move(energy));
  }

  const EnergyCost* site = utility.find<EnergyCost>();
  auto net_offset = [&](int t) {
    return site ? site->other_load_at(ctx.k + t) - site->generation_at(ctx.k + t) : 0.0;
  };
  auto net_load_expr = [&](int t) {
    LinearExpr e;
    for (std::size_t i : present[at(t)]) e.add(out.var(i, t), 1.0);
    e.constant = net_offset(t);
    return e;
  };
  const double kwh_per_amp = ctx.periods.kwh_per_amp_period();
  const double kw_per_amp = ctx.periods.voltage / 1000.0;

  for (const auto& term : utility.terms) {
    const double w = term.weight;
    if (std::holds_alternative<QuickCharge>(term.component)) {
      for (int t = 0; t < T; ++t)
        for (std::size_t i : present[at(t)])
          p.linear_cost[at(out.var(i, t))] += w * static_cast<double>(T - t) / T;
    } else if (std::holds_alternative<EqualShare>(term.component)) {
      for (int t = 0; t < T; ++t)
        for (std::size_t i : present[at(t)]) p.quad_cost[at(out.var(i, t))] += w;
    } else if (const auto* ec = std::get_if<EnergyCost>(&term.component)) {
      for (int t = 0; t < T; ++t) {
        double price = ec->price_at(ctx.k + t);
        double margin = w * (ec->revenue_per_kwh - price) * kwh_per_amp;
        for (std::size_t i : present[at(t)]) p.linear_cost[at(out.var(i, t))] += margin;
        p.constant -= w * price * net_offset(t) * kwh_per_amp;
      }
    } else if (const auto* dc = std::get_if<DemandCharge>(&term.component)) {
      const int day = (ctx.k / ctx.periods.periods_per_day()) % dc->billing_days;
      const double proxy = dc->dynamic_proxy ? dc->rate_per_kw / (dc->billing_days - day) : dc->rate_per_kw;
      EpigraphTerm epi;
      epi.weight = w * proxy * kw_per_amp;
      for (int t = 0; t < T; ++t) epi.exprs.push_back(net_load_expr(t));
      LinearExpr floor;
      floor.constant = std::max({dc->prior_peak_kw, ctx.observed_peak_kw, dc->hint_kw}) / kw_per_amp;
      epi.exprs.push_back(floor);
      p.epigraph_terms.push_back(std::move(epi));
    } else if (std::holds_alternative<LoadVariation>(term.component)) {
      for (int t = 0; t < T; ++t) {
        int nv = p.add_variable(-qp::kInf, qp::kInf, 0.0, w);
        LinearEquality eq;
        eq.expr = net_load_expr(t);
        eq.expr.add(nv, -1.0);
        eq.rhs = -eq.expr.constant;
        eq.expr.constant = 0.0;
        p.linear_eqs.push_back(std::move(eq));
      }
    } else if (const auto* nc = std::get_if<NonCompletion>(&term.component)) {
      NormTerm norm;
      norm.weight = w;
      norm.order = nc->order;
      for (std::size_t i = 0; i < n_ev; ++i) {
        LinearExpr e;
        for (int t = out.first[i]; t < out.last[i]; ++t) e.add(out.var(i, t), 1.0);
        e.constant = -active[i].remaining_energy;
        norm.exprs.push_back(std::move(e));
      }
      p.norm_terms.push_back(std::move(norm));
    }
  }

  for (std::size_t l = 0; l < network.constraints.size(); ++l) {
    const NetworkConstraint& c = network.constraints[l];
    for (int t = 0; t < T; ++t) {
      const int abs_t = ctx.k + t;
      const double limit = c.limit_at(abs_t);
      const Phasor load = c.load_at(abs_t);
      if (ctx.constraint_mode == ConstraintMode::affine) {
        LinearInequality row;
        for (std::size_t i : present[at(t)]) {
          double a = std::abs(network.unit_phasor(l, active[i].evse));
          if (a > 0.0) row.expr.add(out.var(i, t), a);
        }
        if (row.expr.index.empty()) continue;
        row.rhs = limit - std::abs(load) - ctx.limit_margin;
        p.linear_ineqs.push_back(std::move(row));
        continue;
      }
      SocConstraint soc;
      for (std::size_t i : present[at(t)]) {
        Phasor u = network.unit_phasor(l, active[i].evse);
        if (u.real() != 0.0) soc.re.add(out.var(i, t), u.real());
        if (u.imag() != 0.0) soc.im.add(out.var(i, t), u.imag());
      }
      if (soc.re.index.empty() && soc.im.index.empty()) continue;
      soc.re.constant = load.real();
      soc.im.constant = load.imag();
      soc.limit = std::max(0.0, limit - ctx.limit_margin);
      if (ctx.seed_angles) {
        auto it = ctx.seed_angles->find({l, abs_t});
        if (it != ctx.seed_angles->end()) soc.seed_angles = it->second;
      }
      p.soc_constraints.push_back(std::move(soc));
      out.soc_origin.emplace_back(l, abs_t);
    }
  }
  return out;
}

std::vector<double> BuiltProgram::rates(std::span<const double> x, std::size_t i) const {
  std::vector<double> r(static_cast<std::size_t>(horizon), 0.0);
  for (int t = first[i]; t < last[i]; ++t) r[static_cast<std::size_t>(t)] = x[static_cast<std::size_t>(var(i, t))];
  return r;
}

// Post-processing ----------------------------------------------------------------

double shrink_to_feasible(std::vector<double>& rates, std::span<const std::size_t> evse,
                          const ChargingNetwork& network, int t, ConstraintMode mode) {
  std::vector<double> full(network.evse_count(), 0.0);
  auto fill = [&](double s) {
    for (std::size_t i = 0; i < rates.size(); ++i) full[evse[i]] = s * rates[i];
  };
  fill(1.0);
  if (network_feasible(network, full, t, mode)) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int s = 0; s < 60; ++s) {
    double mid = 0.5 * (lo + hi);
    fill(mid);
    (network_feasible(network, full, t, mode) ? lo : hi) = mid;
  }
  for (double& r : rates) r *= lo;
  return lo;
}

namespace {

double step_down(const RateSet& set, double rate) {
  if (set.is_discrete()) return set.floor(rate - 1e-6);
  double lower = rate - 1.0;
  return lower < set.min_nonzero() ? 0.0 : lower;
}

}  // namespace

std::vector<double> quantize_and_reclaim(std::span<const double> r_star, std::span<const std::size_t> evse,
                                         const ChargingNetwork& network, std::span<const RateSet> rate_sets,
                                         int t, ConstraintMode mode, std::span<const double> caps) {
  const std::size_t n = r_star.size();
  std::vector<double> pilot(n);
  std::vector<double> full(network.evse_count(), 0.0);
  double budget = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double target = caps.empty() ? r_star[i] : std::min(r_star[i], caps[i]);
    // Exact floor: snapping up would let the total exceed the continuous one.
    pilot[i] = rate_sets[i].floor(std::max(0.0, target), 0.0);
    full[evse[i]] = pilot[i];
    budget += r_star[i];
  }
  // Rounding down is safe only for monotone constraints; otherwise lower the
  // largest pilots until the point is feasible.
  while (!network_feasible(network, full, t, mode)) {
    auto it = std::max_element(pilot.begin(), pilot.end());
    if (*it <= 0.0) break;
    auto i = static_cast<std::size_t>(it - pilot.begin());
    pilot[i] = step_down(rate_sets[i], pilot[i]);
    full[evse[i]] = pilot[i];
  }
  double total = std::accumulate(pilot.begin(), pilot.end(), 0.0);
  bool raised = true;
  while (raised) {
    raised = false;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return r_star[a] - pilot[a] > r_star[b] - pilot[b];
    });
    for (std::size_t i : order) {
      auto next = rate_sets[i].next_above(pilot[i]);
      if (!next) continue;
      if (!caps.empty() && *next > caps[i] + 1e-9) continue;
      if (total - pilot[i] + *next > budget + 1e-9) continue;
      full[evse[i]] = *next;
      if (network_feasible(network, full, t, mode)) {
        total += *next - pilot[i];
        pilot[i] = *next;
        raised = true;
      } else {
        full[evse[i]] = pilot[i];
      }
    }
  }
  return pilot;
}

double rampdown_update(double pilot, double measured, double bound, const RampdownParams& params,
                       double max_pilot) {
  if (pilot - measured > params.down_threshold) return std::min(measured + params.step, max_pilot);
  if (bound - measured < params.up_threshold) return std::min(bound + params.step, max_pilot);
  return bound;
}

// Adaptive scheduler ---------------------------------------------------------------

namespace {

constexpr std::size_t kMaxRememberedCuts = 16;

}  // namespace

AdaptiveScheduler::AdaptiveScheduler(const ChargingNetwork& network, AsaOptions options)
    : network_(network), options_(std::move(options)) {
  options_.utility.validate();
  if (options_.recompute_period <= 0) throw std::invalid_argument("recompute_period must be > 0");
  for (const auto& e : network_.evses) rate_sets_.push_back(e.rate_set());
}

bool AdaptiveScheduler::should_recompute(int k, bool event_fired) const {
  return !computed_at_ || event_fired || k - *computed_at_ >= options_.recompute_period;
}

void AdaptiveScheduler::recompute(std::span<const EvState> active, int k, double observed_peak_kw) {
  PlanContext ctx;
  ctx.k = k;
  ctx.max_horizon = options_.max_horizon;
  ctx.periods = options_.periods;
  ctx.mode = options_.mode;
  ctx.constraint_mode = options_.constraint_mode;
  ctx.limit_margin = 2.0 * options_.solver.tol;
  ctx.observed_peak_kw = observed_peak_kw;
  ctx.seed_angles = &cut_memory_;
  BuiltProgram built = build_opt(active, options_.utility, network_, ctx);
  Solution sol = solve(built.program, options_.solver);
  ++stats_.solves;
  computed_at_ = k;
  schedule_.clear();
  if (sol.status == SolveStatus::infeasible) {
    ++stats_.infeasible;
    return;
  }
  if (sol.status == SolveStatus::max_iter) ++stats_.max_iter;
  for (std::size_t i = 0; i < active.size(); ++i) {
    schedule_[active[i].session_id] = built.rates(sol.x, i);
  }
  for (auto it = cut_memory_.begin(); it != cut_memory_.end();)
    it = it->first.second < k ? cut_memory_.erase(it) : std::next(it);
  for (std::size_t s = 0; s < built.soc_origin.size(); ++s) {
    const auto& angles = sol.cut_angles[s];
    if (angles.empty()) continue;
    std::size_t keep = std::min(angles.size(), kMaxRememberedCuts);
    cut_memory_[built.soc_origin[s]].assign(angles.end() - static_cast<std::ptrdiff_t>(keep), angles.end());
  }
}

std::vector<double> AdaptiveScheduler::step(std::span<const EvState> present, int k, bool event_fired,
                                            double observed_peak_kw) {
  std::vector<double> pilots(present.size(), 0.0);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < present.size(); ++i)
    if (present[i].remaining_energy > kEnergyEps && present[i].remaining_duration > 0) idx.push_back(i);
  if (idx.empty()) {
    schedule_.clear();
    computed_at_.reset();
    return pilots;
  }
  std::vector<EvState> active;
  for (std::size_t i : idx) active.push_back(present[i]);

  bool missing = std::any_of(active.begin(), active.end(),
                             [&](const EvState& ev) { return !schedule_.contains(ev.session_id); });
  bool had_schedule = !schedule_.empty();
  if (should_recompute(k, event_fired) || (missing && had_schedule) || !had_schedule)
    recompute(active, k, observed_peak_kw);

  std::vector<std::size_t> evse(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) evse[i] = active[i].evse;

  if (schedule_.empty()) {
    ++stats_.fallbacks;
    auto order = priority_order(active, PriorityKey::laxity);
    auto fb = minimum_rate_fallback(active, network_, k, order, options_.constraint_mode);
    for (std::size_t a = 0; a < idx.size(); ++a) pilots[idx[a]] = fb[a];
    return pilots;
  }

  const int offset = k - *computed_at_;
  std::vector<double> r(active.size(), 0.0);
  std::vector<double> caps(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) {
    const auto& plan = schedule_.at(active[i].session_id);
    if (offset < static_cast<int>(plan.size())) r[i] = std::max(0.0, plan[static_cast<std::size_t>(offset)]);
    caps[i] = std::min(active[i].pilot_upper_bound, network_.evses[evse[i]].max_pilot);
  }
  std::vector<double> out;
  if (options_.mode == PilotMode::quantized) {
    // The minimum rate may sit above the rampdown bound; the box was raised
    // the same way when the program was built.
    std::vector<RateSet> sets;
    for (std::size_t i = 0; i < active.size(); ++i) {
      sets.push_back(rate_sets_[evse[i]]);
      caps[i] = std::max(caps[i], sets.back().min_nonzero());
      r[i] = std::min(r[i], caps[i]);
    }
    out = quantize_and_reclaim(r, evse, network_, sets, k, options_.constraint_mode, caps);
  } else {
    out = r;
    for (std::size_t i = 0; i < active.size(); ++i) out[i] = std::min(out[i], caps[i]);
    shrink_to_feasible(out, evse, network_, k, options_.constraint_mode);
  }
  for (std::size_t a = 0; a < idx.size(); ++a) pilots[idx[a]] = out[a];
  return pilots;
}

}  // namespace acn
