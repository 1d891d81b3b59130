#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "acn/workload.hpp"
#include "json.hpp"

namespace acn {

/// Price over [start_minute, end_minute) of a day.
struct TariffSegment {
  int start_minute = 0;
  int end_minute = 1440;
  double price_per_kwh = 0.0;
};

struct Tariff {
  std::string name;
  std::vector<TariffSegment> weekday;
  std::vector<TariffSegment> weekend;
  /// $/kW of billing-period peak.
  double demand_charge_rate = 0.0;

  /// Segments must tile [0, 1440) in order with non-negative prices.
  void validate() const;
};

/// Summer time-of-use EV schedule: off-peak 23:00-8:00, mid-peak 8:00-12:00
/// and 18:00-23:00, peak 12:00-18:00 on weekdays; weekends at the off-peak
/// price; 15.51 $/kW per month demand charge.
Tariff sce_tou4_summer();

/// Price at `minute` (taken modulo one day).
double tou_rate(const Tariff& tariff, int minute, bool weekend);

/// Price of each of `count` periods starting at midnight of `start`.
std::vector<double> price_series(const Tariff& tariff, Weekday start, const PeriodConfig& periods, int count);

struct BillingResult {
  double energy_cost = 0.0;
  double demand_charge = 0.0;
  double revenue = 0.0;
  double profit = 0.0;
  double peak_kw = 0.0;
};

/// Calendar placement of a load profile.
struct BillingWindow {
  Weekday start = Weekday::mon;
  double period_minutes = 5.0;
  /// Share of the monthly demand charge billed for this window.
  double demand_charge_fraction = 1.0;
};

/// Throws std::invalid_argument on a negative load entry.
BillingResult bill(std::span<const double> load_kw, double delivered_kwh, const Tariff& tariff,
                   double revenue_per_kwh, const BillingWindow& window = {});

/// rate / (billing_days - day); requires 0 <= day < billing_days.
double demand_charge_proxy(double rate, int billing_days, int day);

inline constexpr double kPeakHintFraction = 0.75;

/// Fraction of the previous optimal peak, 0 without history.
double peak_hint(std::optional<double> previous_optimal_peak_kw);

/// kW drawn by `amps` at `voltage`, unity power factor.
inline double amps_to_kw(double amps, double voltage) { return amps * voltage / 1000.0; }

nlohmann::json tariff_to_json(const Tariff& tariff);
Tariff tariff_from_json(const nlohmann::json& j);
Tariff load_tariff(const std::string& path);
/// Named preset or a path to a tariff file.
Tariff resolve_tariff(const std::string& name_or_path);

}  // namespace acn
