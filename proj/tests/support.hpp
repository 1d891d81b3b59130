#pragma once

#include <string>
#include <vector>

#include <fmt/format.h>

#include "acn/infra.hpp"
#include "acn/scheduler.hpp"

namespace acn::testing {

/// `count` EVSEs on one in-phase line of `limit` amps. `rates` must be
/// ascending and start at 0.
inline ChargingNetwork line_network(int count, double limit, std::vector<double> rates = {}, double max_pilot = 32.0) {
  ChargingNetwork net;
  NetworkConstraint line{"line", {}, {limit}, {}};
  for (int i = 0; i < count; ++i) {
    Evse e;
    e.id = fmt::format("E{}", i);
    e.max_pilot = max_pilot;
    // An empty list means the continuous interval [0, max_pilot].
    e.continuous = rates.empty();
    e.allowable_rates = rates.empty() ? std::vector<double>{0.0, max_pilot} : rates;
    e.min_nonzero_rate = rates.size() > 1 ? rates[1] : 0.0;
    net.evses.push_back(e);
    line.coefficients.emplace_back(1.0, 0.0);
  }
  net.constraints.push_back(line);
  net.validate();
  return net;
}

inline EvState ev(std::size_t evse, double remaining, int duration, double bound = 32.0, int arrival = 0) {
  EvState s;
  s.session_id = fmt::format("S{}", evse);
  s.evse = evse;
  s.arrival = arrival;
  s.departure = arrival + duration;
  s.requested_energy = remaining;
  s.remaining_energy = remaining;
  s.remaining_duration = duration;
  s.pilot_upper_bound = bound;
  return s;
}

}  // namespace acn::testing
