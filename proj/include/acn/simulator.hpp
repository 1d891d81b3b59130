#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "acn/battery.hpp"
#include "acn/billing.hpp"
#include "acn/infra.hpp"
#include "acn/scheduler.hpp"
#include "acn/solver.hpp"
#include "acn/workload.hpp"
#include "json.hpp"

namespace acn {

struct Scenario {
  std::string name;
  bool perfect_information = false;
  bool continuous_evse = true;
  bool ideal_battery = true;
};

/// Presets "I" through "V": offline/ideal, online/ideal, quantized EVSEs,
/// two-stage batteries, and both.
Scenario scenario_preset(const std::string& name);

/// Copy of `network` whose EVSEs accept any pilot in [0, max_pilot].
ChargingNetwork with_continuous_evses(const ChargingNetwork& network);

enum class AlgorithmKind { asa, llf, edf, rr, uncontrolled };

struct AlgorithmSpec {
  std::string name;
  AlgorithmKind kind = AlgorithmKind::asa;
  /// Objective for AlgorithmKind::asa.
  UtilityConfig utility;
};

AlgorithmKind algorithm_kind_from_string(const std::string& s);
std::string to_string(AlgorithmKind k);

struct SimOptions {
  PeriodConfig periods;
  int max_horizon = 144;
  int recompute_period = 1;
  ConstraintMode constraint_mode = ConstraintMode::soc;
  SolverOptions solver;
  RampdownParams rampdown;
  /// Defaults to enabled exactly when batteries are non-ideal.
  std::optional<bool> rampdown_enabled;
  double tail_start_soc = 0.8;
  double audit_tol = kFeasibilityTol;
  Weekday start_day = Weekday::mon;
  std::optional<Tariff> tariff;
  double revenue_per_kwh = 0.30;
  double demand_charge_fraction = 1.0;
};

/// Per-period trace of one session from its arrival to its departure.
struct SessionTrace {
  std::string session_id;
  std::string evse_id;
  int arrival = 0;
  int departure = 0;
  double requested = 0.0;
  double delivered = 0.0;
  std::vector<double> pilot;
  std::vector<double> measured;
};

struct SimResult {
  std::string algorithm;
  std::string scenario;
  int periods = 0;
  PeriodConfig period_config;
  std::vector<SessionTrace> sessions;
  /// Total measured current per period, amps.
  std::vector<double> load_amps;
  /// |aggregate phasor| of measured currents, [constraint][period].
  std::vector<std::vector<double>> constraint_magnitude;
  std::vector<std::string> constraint_ids;
  std::optional<BillingResult> billing;
  /// (period, constraint) pairs whose pilots fail the SOC check.
  int audit_violations = 0;
  bool audited = false;
  AsaStats solver_stats;

  double requested_total() const;
  double delivered_total() const;
  std::vector<double> load_kw() const;
};

double demand_met(const SimResult& result);

/// Runs the closed loop over the sessions. Throws std::invalid_argument on
/// inconsistent sessions.
SimResult run(const ChargingNetwork& network, std::span<const Session> sessions, const AlgorithmSpec& algorithm,
              const Scenario& scenario, const SimOptions& options = {});

/// One solve over the whole horizon with every session known, replayed
/// open-loop with ideal batteries and continuous EVSEs.
SimResult offline_optimal(const ChargingNetwork& network, std::span<const Session> sessions,
                          const UtilityConfig& utility, const SimOptions& options = {});

nlohmann::json summary_json(const SimResult& result);
/// Columns: period, session_id, evse_id, pilot, measured.
std::string traces_csv(const SimResult& result);
/// Columns: period, load_amps, load_kw, then one magnitude column per constraint.
std::string load_csv(const SimResult& result);

}  // namespace acn
