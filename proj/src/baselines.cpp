#include "acn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace acn {

namespace {

constexpr int kBisectionSteps = 50;

// Highest rate an EV may usefully receive: its bound, and no more than what
// finishes its remaining energy (rounded up into the set so it can finish).
double rate_cap(const EvState& ev, const RateSet& set) {
  double bound = std::min(ev.pilot_upper_bound, set.max());
  double need = std::max(ev.remaining_energy, 0.0);
  if (!set.is_discrete()) {
    double cap = std::min(bound, need);
    return cap > 0.0 && cap < set.min_nonzero() ? set.min_nonzero() : cap;
  }
  double floor_bound = set.floor(bound);
  double need_member = set.max();
  for (double v : set.values())
    if (v + 1e-9 >= need) {
      need_member = v;
      break;
    }
  return std::min(floor_bound, need_member);
}

struct Allocation {
  std::span<const EvState> active;
  const ChargingNetwork& network;
  int t;
  ConstraintMode mode;
  std::vector<double> rates;  // per EVSE

  Allocation(std::span<const EvState> a, const ChargingNetwork& n, int period, ConstraintMode m)
      : active(a), network(n), t(period), mode(m), rates(n.evse_count(), 0.0) {}

  bool feasible_with(std::size_t i, double rate) {
    std::size_t e = active[i].evse;
    double old = rates[e];
    rates[e] = rate;
    bool ok = network_feasible(network, rates, t, mode);
    rates[e] = old;
    return ok;
  }

  // Largest allowable rate in [current, cap] keeping the network feasible.
  // The feasible rates of one EV with the others fixed form an interval.
  double best_rate(std::size_t i, const RateSet& set, double cap) {
    double current = rates[active[i].evse];
    if (cap <= current) return current;
    if (set.is_discrete()) {
      const auto& v = set.values();
      for (auto it = v.rbegin(); it != v.rend(); ++it) {
        if (*it > cap + 1e-9 || *it <= current) continue;
        if (feasible_with(i, *it)) return *it;
      }
      return current;
    }
    if (feasible_with(i, cap)) return cap;
    double lo = current, hi = cap;
    double min_rate = set.min_nonzero();
    if (current < min_rate) {
      if (!feasible_with(i, min_rate)) return current;
      lo = min_rate;
    }
    for (int s = 0; s < kBisectionSteps; ++s) {
      double mid = 0.5 * (lo + hi);
      (feasible_with(i, mid) ? lo : hi) = mid;
    }
    return lo;
  }

  std::vector<double> pilots() const {
    std::vector<double> out(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) out[i] = rates[active[i].evse];
    return out;
  }
};

std::vector<RateSet> rate_sets_of(std::span<const EvState> active, const ChargingNetwork& network) {
  std::vector<RateSet> sets;
  sets.reserve(active.size());
  for (const auto& ev : active) sets.push_back(network.evses[ev.evse].rate_set());
  return sets;
}

bool needs_minimum(std::span<const RateSet> sets) {
  return std::any_of(sets.begin(), sets.end(),
                     [](const RateSet& s) { return s.is_discrete() || s.min_nonzero() > 0.0; });
}

}  // namespace

double laxity(const EvState& ev) {
  if (ev.pilot_upper_bound <= 0.0) return std::numeric_limits<double>::infinity();
  return ev.remaining_duration - ev.remaining_energy / ev.pilot_upper_bound;
}

std::vector<std::size_t> priority_order(std::span<const EvState> active, PriorityKey key) {
  std::vector<std::size_t> order(active.size());
  std::iota(order.begin(), order.end(), 0);
  auto key_of = [&](const EvState& ev) -> double {
    switch (key) {
      case PriorityKey::laxity: return laxity(ev);
      case PriorityKey::deadline: return ev.departure;
      case PriorityKey::arrival: return ev.arrival;
    }
    return 0.0;
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const EvState& x = active[a];
    const EvState& y = active[b];
    double kx = key_of(x), ky = key_of(y);
    if (kx != ky) return kx < ky;
    if (x.arrival != y.arrival) return x.arrival < y.arrival;
    return x.session_id < y.session_id;
  });
  return order;
}

std::vector<double> evse_rates(std::span<const EvState> active, std::span<const double> pilots,
                               const ChargingNetwork& network) {
  std::vector<double> rates(network.evse_count(), 0.0);
  for (std::size_t i = 0; i < active.size(); ++i) rates[active[i].evse] = pilots[i];
  return rates;
}

bool minimum_rates_feasible(std::span<const EvState> active, const ChargingNetwork& network, int t,
                            ConstraintMode mode) {
  std::vector<double> rates(network.evse_count(), 0.0);
  for (const auto& ev : active) rates[ev.evse] = network.evses[ev.evse].rate_set().min_nonzero();
  return network_feasible(network, rates, t, mode);
}

std::vector<double> minimum_rate_fallback(std::span<const EvState> active, const ChargingNetwork& network,
                                          int t, std::span<const std::size_t> order, ConstraintMode mode) {
  Allocation alloc(active, network, t, mode);
  for (std::size_t i : order) {
    double m = network.evses[active[i].evse].rate_set().min_nonzero();
    if (alloc.feasible_with(i, m)) alloc.rates[active[i].evse] = m;
  }
  return alloc.pilots();
}

std::vector<double> greedy_schedule(std::span<const EvState> active, const ChargingNetwork& network, int t,
                                    std::span<const std::size_t> order, ConstraintMode mode) {
  auto sets = rate_sets_of(active, network);
  if (needs_minimum(sets) && !minimum_rates_feasible(active, network, t, mode))
    return minimum_rate_fallback(active, network, t, order, mode);
  Allocation alloc(active, network, t, mode);
  if (needs_minimum(sets))
    for (std::size_t i = 0; i < active.size(); ++i) alloc.rates[active[i].evse] = sets[i].min_nonzero();
  for (std::size_t i : order) alloc.rates[active[i].evse] = alloc.best_rate(i, sets[i], rate_cap(active[i], sets[i]));
  return alloc.pilots();
}

std::vector<double> llf_schedule(std::span<const EvState> active, const ChargingNetwork& network, int t,
                                 ConstraintMode mode) {
  auto order = priority_order(active, PriorityKey::laxity);
  return greedy_schedule(active, network, t, order, mode);
}

std::vector<double> edf_schedule(std::span<const EvState> active, const ChargingNetwork& network, int t,
                                 ConstraintMode mode) {
  auto order = priority_order(active, PriorityKey::deadline);
  return greedy_schedule(active, network, t, order, mode);
}

std::vector<double> rr_schedule(std::span<const EvState> active, const ChargingNetwork& network, int t,
                                ConstraintMode mode) {
  auto sets = rate_sets_of(active, network);
  auto order = priority_order(active, PriorityKey::arrival);
  if (needs_minimum(sets) && !minimum_rates_feasible(active, network, t, mode))
    return minimum_rate_fallback(active, network, t, order, mode);
  Allocation alloc(active, network, t, mode);
  if (needs_minimum(sets))
    for (std::size_t i = 0; i < active.size(); ++i) alloc.rates[active[i].evse] = sets[i].min_nonzero();
  std::vector<double> caps(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) caps[i] = rate_cap(active[i], sets[i]);
  bool raised = true;
  while (raised) {
    raised = false;
    for (std::size_t i : order) {
      double current = alloc.rates[active[i].evse];
      if (current >= caps[i] - 1e-9) continue;
      auto next = sets[i].next_above(current, kRoundRobinStep);
      if (!next) continue;
      double candidate = *next;
      if (candidate > caps[i] + 1e-9) {
        if (sets[i].is_discrete()) continue;
        candidate = caps[i];
      }
      if (alloc.feasible_with(i, candidate)) {
        alloc.rates[active[i].evse] = candidate;
        raised = true;
      }
    }
  }
  return alloc.pilots();
}

std::vector<double> uncontrolled(std::span<const EvState> active, const ChargingNetwork& network) {
  std::vector<double> out;
  out.reserve(active.size());
  for (const auto& ev : active) out.push_back(network.evses[ev.evse].max_pilot);
  return out;
}

}  // namespace acn
