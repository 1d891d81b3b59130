#include "acn/billing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/core.h>

namespace acn {

namespace {

void validate_day(const std::vector<TariffSegment>& day, const char* which) {
  int cursor = 0;
  for (const auto& s : day) {
    if (s.start_minute != cursor || s.end_minute <= s.start_minute)
      throw std::invalid_argument(fmt::format("tariff: {} segments must tile the day in order", which));
    if (s.price_per_kwh < 0.0) throw std::invalid_argument("tariff: negative price");
    cursor = s.end_minute;
  }
  if (cursor != 1440) throw std::invalid_argument(fmt::format("tariff: {} segments must end at 1440", which));
}

}  // namespace

void Tariff::validate() const {
  validate_day(weekday, "weekday");
  validate_day(weekend, "weekend");
  if (demand_charge_rate < 0.0) throw std::invalid_argument("tariff: negative demand charge rate");
}

Tariff sce_tou4_summer() {
  Tariff t;
  t.name = "sce-tou4-summer";
  t.weekday = {{0, 480, 0.056}, {480, 720, 0.092}, {720, 1080, 0.267}, {1080, 1380, 0.092}, {1380, 1440, 0.056}};
  t.weekend = {{0, 1440, 0.056}};
  t.demand_charge_rate = 15.51;
  return t;
}

double tou_rate(const Tariff& tariff, int minute, bool weekend) {
  int m = ((minute % 1440) + 1440) % 1440;
  const auto& day = weekend ? tariff.weekend : tariff.weekday;
  for (const auto& s : day)
    if (m >= s.start_minute && m < s.end_minute) return s.price_per_kwh;
  throw std::invalid_argument("tariff: minute not covered");
}

std::vector<double> price_series(const Tariff& tariff, Weekday start, const PeriodConfig& periods, int count) {
  std::vector<double> out(static_cast<std::size_t>(std::max(count, 0)));
  for (int k = 0; k < count; ++k) {
    double minute = k * periods.period_minutes;
    int day = static_cast<int>(minute / 1440.0);
    out[static_cast<std::size_t>(k)] =
        tou_rate(tariff, static_cast<int>(std::floor(minute)) % 1440, is_weekend(advance(start, day)));
  }
  return out;
}

BillingResult bill(std::span<const double> load_kw, double delivered_kwh, const Tariff& tariff,
                   double revenue_per_kwh, const BillingWindow& window) {
  BillingResult r;
  const double hours = window.period_minutes / 60.0;
  for (std::size_t k = 0; k < load_kw.size(); ++k) {
    if (load_kw[k] < 0.0) throw std::invalid_argument(fmt::format("bill: negative load at period {}", k));
    double minute = static_cast<double>(k) * window.period_minutes;
    int day = static_cast<int>(minute / 1440.0);
    double price = tou_rate(tariff, static_cast<int>(std::floor(minute)) % 1440, is_weekend(advance(window.start, day)));
    r.energy_cost += price * load_kw[k] * hours;
    r.peak_kw = std::max(r.peak_kw, load_kw[k]);
  }
  r.demand_charge = window.demand_charge_fraction * tariff.demand_charge_rate * r.peak_kw;
  r.revenue = revenue_per_kwh * delivered_kwh;
  r.profit = r.revenue - r.energy_cost - r.demand_charge;
  return r;
}

double demand_charge_proxy(double rate, int billing_days, int day) {
  if (day < 0 || day >= billing_days) throw std::invalid_argument("demand_charge_proxy: day outside billing period");
  return rate / (billing_days - day);
}

double peak_hint(std::optional<double> previous_optimal_peak_kw) {
  return previous_optimal_peak_kw ? kPeakHintFraction * *previous_optimal_peak_kw : 0.0;
}

namespace {

nlohmann::json segments_json(const std::vector<TariffSegment>& day) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& s : day)
    a.push_back({{"start_minute", s.start_minute}, {"end_minute", s.end_minute}, {"price_per_kwh", s.price_per_kwh}});
  return a;
}

std::vector<TariffSegment> segments_from(const nlohmann::json& a) {
  std::vector<TariffSegment> out;
  for (const auto& s : a)
    out.push_back({s.at("start_minute").get<int>(), s.at("end_minute").get<int>(), s.at("price_per_kwh").get<double>()});
  return out;
}

}  // namespace

nlohmann::json tariff_to_json(const Tariff& t) {
  return {{"name", t.name},
          {"demand_charge_rate", t.demand_charge_rate},
          {"weekday", segments_json(t.weekday)},
          {"weekend", segments_json(t.weekend)}};
}

Tariff tariff_from_json(const nlohmann::json& j) {
  Tariff t;
  t.name = j.value("name", std::string("custom"));
  t.demand_charge_rate = j.at("demand_charge_rate").get<double>();
  t.weekday = segments_from(j.at("weekday"));
  t.weekend = segments_from(j.at("weekend"));
  t.validate();
  return t;
}

Tariff load_tariff(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open tariff file {}", path));
  return tariff_from_json(nlohmann::json::parse(in));
}

Tariff resolve_tariff(const std::string& name_or_path) {
  if (name_or_path == "sce-tou4-summer") return sce_tou4_summer();
  return load_tariff(name_or_path);
}

}  // namespace acn
