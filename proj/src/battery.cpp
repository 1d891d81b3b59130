#include "acn/battery.hpp"

#include <algorithm>
#include <stdexcept>

namespace acn {

double BatteryState::current_bound() const {
  if (model == BatteryModel::ideal) return max_current;
  double s = soc();
  if (s <= tail_start_soc) return max_current;
  return std::max(0.0, max_current * (1.0 - s) / (1.0 - tail_start_soc));
}

void BatteryState::validate() const {
  if (!(capacity >= 0.0) || charge < 0.0 || charge > capacity + 1e-9)
    throw std::invalid_argument("battery charge must lie in [0, capacity]");
  if (!(max_current > 0.0)) throw std::invalid_argument("battery max_current must be > 0");
  if (model == BatteryModel::two_stage && !(tail_start_soc > 0.0 && tail_start_soc < 1.0))
    throw std::invalid_argument("tail_start_soc must lie in (0, 1)");
}

BatteryResponse response(const BatteryState& state, double pilot, double period_length) {
  if (pilot < 0.0) throw std::invalid_argument("pilot must be non-negative");
  if (!(period_length > 0.0)) throw std::invalid_argument("period length must be positive");
  BatteryResponse out{0.0, state};
  double room = std::max(0.0, state.remaining()) / period_length;
  out.drawn = std::max(0.0, std::min({pilot, state.current_bound(), room}));
  out.state.charge = std::min(state.capacity, state.charge + out.drawn * period_length);
  return out;
}

BatteryState fit_to_session(const Session& session, double max_current, BatteryModel model,
                            double tail_start_soc) {
  BatteryState b;
  b.capacity = session.requested_energy;
  b.charge = 0.0;
  b.max_current = max_current;
  b.model = model;
  b.tail_start_soc = tail_start_soc;
  b.validate();
  return b;
}

}  // namespace acn
