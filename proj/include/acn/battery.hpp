#pragma once

#include "acn/workload.hpp"

namespace acn {

enum class BatteryModel { ideal, two_stage };

/// Charge and capacity are in amp-periods; currents in amps.
struct BatteryState {
  double capacity = 0.0;
  double charge = 0.0;
  double max_current = 32.0;
  BatteryModel model = BatteryModel::ideal;
  /// State of charge where the linear tail begins (two-stage model only).
  double tail_start_soc = 0.8;

  double soc() const { return capacity > 0.0 ? charge / capacity : 1.0; }
  double remaining() const { return capacity - charge; }
  /// Current the BMS accepts at the present state of charge.
  double current_bound() const;
  void validate() const;
};

struct BatteryResponse {
  double drawn = 0.0;
  BatteryState state;
};

/// Current drawn under `pilot` for one step of `period_length` periods.
/// Throws std::invalid_argument for a negative pilot.
BatteryResponse response(const BatteryState& state, double pilot, double period_length = 1.0);

/// Battery whose full capacity is the session's request, starting empty, so
/// the whole tail region lies inside the request.
BatteryState fit_to_session(const Session& session, double max_current, BatteryModel model,
                            double tail_start_soc = 0.8);

}  // namespace acn
