#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "acn/infra.hpp"
#include "acn/solver.hpp"
#include "acn/workload.hpp"
#include "json.hpp"

namespace acn {

/// Scheduler view of one plugged-in EV at the current period.
struct EvState {
  std::string session_id;
  std::size_t evse = 0;
  int arrival = 0;
  int departure = 0;
  double requested_energy = 0.0;
  /// Amp-periods still owed.
  double remaining_energy = 0.0;
  /// Periods until departure.
  int remaining_duration = 0;
  /// Never above the EVSE max pilot.
  double pilot_upper_bound = 0.0;
  double last_pilot = 0.0;
  double last_measured = 0.0;
};

/// Remaining energy below this (amp-periods) counts as delivered.
inline constexpr double kEnergyEps = 1e-6;

EvState make_ev_state(const Session& session, const ChargingNetwork& network, int k);

/// EVs with remaining energy and remaining duration.
std::vector<EvState> active_set(std::span<const EvState> present);

/// Feedback update after metering one period.
void apply_measurement(EvState& ev, double pilot, double measured);

// Utility components ---------------------------------------------------------

struct QuickCharge {};
struct EqualShare {};
struct LoadVariation {};

/// Revenue minus time-of-use energy cost. Series are indexed by absolute
/// period; indices past the end reuse the last entry, empty series read 0.
struct EnergyCost {
  double revenue_per_kwh = 0.30;
  std::vector<double> price_per_kwh;
  std::vector<double> other_load;
  std::vector<double> generation;

  double price_at(int k) const;
  double other_load_at(int k) const;
  double generation_at(int k) const;
};

/// Demand charge on the peak net load. With `dynamic_proxy` the per-kW price
/// is rate/(billing_days - d) on day d, otherwise the full rate.
struct DemandCharge {
  double rate_per_kw = 15.51;
  int billing_days = 30;
  bool dynamic_proxy = true;
  double prior_peak_kw = 0.0;
  double hint_kw = 0.0;
};

struct NonCompletion {
  int order = 1;
};

using UtilityComponent =
    std::variant<QuickCharge, EnergyCost, DemandCharge, LoadVariation, EqualShare, NonCompletion>;

struct UtilityTerm {
  double weight = 1.0;
  UtilityComponent component;
};

struct UtilityConfig {
  std::vector<UtilityTerm> terms;

  void validate() const;
  template <class C>
  const C* find() const {
    for (const auto& t : terms)
      if (const auto* c = std::get_if<C>(&t.component)) return c;
    return nullptr;
  }
  template <class C>
  C* find() {
    for (auto& t : terms)
      if (auto* c = std::get_if<C>(&t.component)) return c;
    return nullptr;
  }
};

std::string component_name(const UtilityComponent& c);
nlohmann::json utility_to_json(const UtilityConfig& u);
UtilityConfig utility_from_json(const nlohmann::json& j);

// Optimization problem -------------------------------------------------------

enum class PilotMode { continuous, quantized };

struct PlanContext {
  /// Current absolute period.
  int k = 0;
  int max_horizon = 144;
  PeriodConfig periods;
  PilotMode mode = PilotMode::continuous;
  ConstraintMode constraint_mode = ConstraintMode::soc;
  /// Network limits are tightened by this much so that solutions within the
  /// solver tolerance still pass the exact feasibility check.
  double limit_margin = 2e-4;
  /// Highest net load (kW) metered so far in the billing period.
  double observed_peak_kw = 0.0;
  /// Cut directions keyed by (constraint index, absolute period).
  const std::map<std::pair<std::size_t, int>, std::vector<double>>* seed_angles = nullptr;
};

struct BuiltProgram {
  ConvexProgram program;
  int horizon = 0;
  std::size_t ev_count = 0;
  /// Origin (constraint index, absolute period) of each SOC constraint.
  std::vector<std::pair<std::size_t, int>> soc_origin;

  /// Periods [first[i], last[i]) relative to the plan start carry variables.
  std::vector<int> first;
  std::vector<int> last;
  std::vector<int> offset;

  /// Index of r_i(t); -1 outside the EV's window.
  int var(std::size_t i, int t) const {
    return t >= first[i] && t < last[i] ? offset[i] + t - first[i] : -1;
  }
  /// Rates of EV i over the horizon, zero outside its window.
  std::vector<double> rates(std::span<const double> x, std::size_t i) const;
};

/// Horizon used for the active set: min(max_horizon, longest remaining duration).
/// EVs arriving after the plan start (offline planning) get variables only
/// from their arrival on.
int plan_horizon(std::span<const EvState> active, int max_horizon);

/// Throws std::invalid_argument for an empty active set or a non-positive horizon.
BuiltProgram build_opt(std::span<const EvState> active, const UtilityConfig& utility,
                       const ChargingNetwork& network, const PlanContext& ctx);

// Post-processing -------------------------------------------------------------

/// Rounds each rate down into its set, then raises pilots in descending order
/// of rounding loss while the network stays feasible and the total stays
/// within the continuous total. `evse`, `rate_sets` and `caps` are aligned
/// with `r_star`; `caps` bounds each pilot when given.
std::vector<double> quantize_and_reclaim(std::span<const double> r_star, std::span<const std::size_t> evse,
                                         const ChargingNetwork& network, std::span<const RateSet> rate_sets,
                                         int t, ConstraintMode mode = ConstraintMode::soc,
                                         std::span<const double> caps = {});

struct RampdownParams {
  double down_threshold = 2.0;
  double up_threshold = 1.0;
  double step = 1.0;
};

/// New pilot upper bound after observing `measured` under `pilot`.
double rampdown_update(double pilot, double measured, double bound, const RampdownParams& params,
                       double max_pilot);

/// Uniformly scales rates down until every constraint passes at period t.
/// Returns the scale applied.
double shrink_to_feasible(std::vector<double>& rates, std::span<const std::size_t> evse,
                          const ChargingNetwork& network, int t, ConstraintMode mode);

// Adaptive scheduling -----------------------------------------------------------

struct AsaOptions {
  UtilityConfig utility;
  int max_horizon = 144;
  int recompute_period = 1;
  PilotMode mode = PilotMode::continuous;
  ConstraintMode constraint_mode = ConstraintMode::soc;
  SolverOptions solver;
  PeriodConfig periods;
};

struct AsaStats {
  int solves = 0;
  int infeasible = 0;
  int fallbacks = 0;
  int max_iter = 0;
};

/// Model-predictive loop: re-solves on events or after `recompute_period`
/// periods, then reads pilots off the stored schedule.
class AdaptiveScheduler {
 public:
  AdaptiveScheduler(const ChargingNetwork& network, AsaOptions options);

  /// Pilots aligned with `present` (zero for inactive EVs).
  std::vector<double> step(std::span<const EvState> present, int k, bool event_fired,
                           double observed_peak_kw = 0.0);

  const AsaStats& stats() const { return stats_; }
  const AsaOptions& options() const { return options_; }

 private:
  bool should_recompute(int k, bool event_fired) const;
  void recompute(std::span<const EvState> active, int k, double observed_peak_kw);

  const ChargingNetwork& network_;
  AsaOptions options_;
  std::vector<RateSet> rate_sets_;
  std::optional<int> computed_at_;
  std::map<std::string, std::vector<double>> schedule_;
  std::map<std::pair<std::size_t, int>, std::vector<double>> cut_memory_;
  AsaStats stats_;
};

}  // namespace acn
