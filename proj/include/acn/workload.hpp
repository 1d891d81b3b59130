#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "acn/infra.hpp"
#include "json.hpp"

namespace acn {

enum class Weekday { sun = 0, mon, tue, wed, thu, fri, sat };

inline bool is_weekend(Weekday d) { return d == Weekday::sun || d == Weekday::sat; }
Weekday weekday_from_string(const std::string& s);
std::string to_string(Weekday d);
/// Day `offset` days after `start`.
Weekday advance(Weekday start, int offset);

/// Time discretization shared by the workload, scheduler and billing code.
struct PeriodConfig {
  double period_minutes = 5.0;
  double voltage = 208.0;

  int periods_per_day() const;
  /// kWh delivered by one amp flowing for one period at `voltage`.
  double kwh_per_amp_period() const;
};

/// One EV visit. Times are period indices; energy is in amp-periods at
/// nominal voltage.
struct Session {
  std::string id;
  std::string evse_id;
  int arrival = 0;
  int departure = 0;
  double requested_energy = 0.0;
  double original_kwh = 0.0;

  int duration() const { return departure - arrival; }
};

double kwh_to_amp_periods(double kwh, double voltage, double period_minutes);
double amp_periods_to_kwh(double amp_periods, double voltage, double period_minutes);

struct DayStats {
  double mean_sessions = 0.0;
  double mean_duration_hours = 0.0;
  double mean_energy_kwh = 0.0;
};

struct WorkloadStats {
  /// Indexed by Weekday.
  std::array<DayStats, 7> days{};
  std::array<double, 24> weekday_hourly{};
  std::array<double, 24> weekend_hourly{};

  const std::array<double, 24>& hourly(Weekday d) const {
    return is_weekend(d) ? weekend_hourly : weekday_hourly;
  }
  void validate() const;
};

/// Per-day averages of the reference garage (May-Oct 2018, 54 EVSEs) with
/// hourly arrival weights shaped after its weekday/weekend arrival histograms:
/// a weekday morning peak between 7:00 and 10:00 plus a small evening bump,
/// and a flatter weekend profile.
WorkloadStats caltech_stats();

/// Multiplies every mean daily session count by `factor`.
WorkloadStats scale_sessions(WorkloadStats stats, double factor);

WorkloadStats stats_from_json(const nlohmann::json& j);
nlohmann::json stats_to_json(const WorkloadStats& stats);
WorkloadStats load_stats(const std::string& path);

struct DatasetLoad {
  std::vector<Session> sessions;
  /// Records dropped for disconnect <= connect or non-positive energy.
  int dropped = 0;
};

/// Parses a JSON array of {id, evse_id, connect_minute, disconnect_minute, kwh}.
/// Arrivals snap down and departures up to period boundaries. Unknown EVSE
/// ids throw std::invalid_argument.
DatasetLoad parse_dataset(const nlohmann::json& records, const ChargingNetwork& network,
                          const PeriodConfig& periods);
DatasetLoad load_dataset(const std::string& path, const ChargingNetwork& network,
                         const PeriodConfig& periods);
nlohmann::json dataset_to_json(std::span<const Session> sessions, const PeriodConfig& periods);
void save_dataset(std::span<const Session> sessions, const PeriodConfig& periods, const std::string& path);

/// Synthetic sessions for consecutive days (day i starts at minute 1440*i).
/// Deterministic in `seed`. Sessions that find every EVSE busy are dropped.
std::vector<Session> generate_workload(const WorkloadStats& stats, std::span<const Weekday> days,
                                       std::uint64_t seed, const ChargingNetwork& network,
                                       const PeriodConfig& periods);

/// Throws std::invalid_argument if sessions overlap on an EVSE or break the
/// Session invariants.
void validate_sessions(std::span<const Session> sessions, const ChargingNetwork& network);

}  // namespace acn
