#pragma once

#include <span>
#include <string>
#include <vector>

#include "acn/infra.hpp"
#include "acn/scheduler.hpp"

namespace acn {

enum class PriorityKey { laxity, deadline, arrival };

/// Laxity in periods: remaining duration minus periods needed at the pilot bound.
double laxity(const EvState& ev);

/// Indices of `active` sorted by key; ties go to earlier arrival, then id.
std::vector<std::size_t> priority_order(std::span<const EvState> active, PriorityKey key);

/// Greedy allocation in priority order: each EV takes the largest allowable
/// rate up to min(pilot bound, remaining energy) that keeps the network
/// feasible. EVSEs with a positive minimum rate first receive it for every EV
/// when that is jointly feasible, and otherwise go through the fallback.
std::vector<double> greedy_schedule(std::span<const EvState> active, const ChargingNetwork& network, int t,
                                    std::span<const std::size_t> order,
                                    ConstraintMode mode = ConstraintMode::soc);

std::vector<double> llf_schedule(std::span<const EvState> active, const ChargingNetwork& network, int t,
                                 ConstraintMode mode = ConstraintMode::soc);
std::vector<double> edf_schedule(std::span<const EvState> active, const ChargingNetwork& network, int t,
                                 ConstraintMode mode = ConstraintMode::soc);

/// Continuous-set increment of the round-robin cycle, in amps.
inline constexpr double kRoundRobinStep = 1.0;

/// Cycles over EVs in arrival order raising each pilot by one step of its set
/// per visit until no pilot can rise.
std::vector<double> rr_schedule(std::span<const EvState> active, const ChargingNetwork& network, int t,
                                ConstraintMode mode = ConstraintMode::soc);

/// Every EV at its EVSE max pilot; the network is ignored.
std::vector<double> uncontrolled(std::span<const EvState> active, const ChargingNetwork& network);

/// True when every active EV can hold its minimum nonzero rate at once.
bool minimum_rates_feasible(std::span<const EvState> active, const ChargingNetwork& network, int t,
                            ConstraintMode mode = ConstraintMode::soc);

/// Minimum nonzero rate to as many EVs as possible in `order`, 0 to the rest.
std::vector<double> minimum_rate_fallback(std::span<const EvState> active, const ChargingNetwork& network,
                                          int t, std::span<const std::size_t> order,
                                          ConstraintMode mode = ConstraintMode::soc);

/// Full per-EVSE rate vector for the pilots of `active`.
std::vector<double> evse_rates(std::span<const EvState> active, std::span<const double> pilots,
                               const ChargingNetwork& network);

}  // namespace acn
