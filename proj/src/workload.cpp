#include "acn/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

namespace acn {

using nlohmann::json;

namespace {

const char* kDayNames[7] = {"sun", "mon", "tue", "wed", "thu", "fri", "sat"};

// Uniform double in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations so outputs are portable.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double exponential(std::mt19937_64& rng, double mean) { return -mean * std::log1p(-uniform01(rng)); }

int poisson(std::mt19937_64& rng, double mean) {
  if (mean <= 0.0) return 0;
  // Sequential inversion; adequate for means up to a few hundred.
  double u = uniform01(rng);
  double p = std::exp(-mean);
  double cdf = p;
  int k = 0;
  while (u > cdf && k < 10000) {
    ++k;
    p *= mean / k;
    cdf += p;
  }
  return k;
}

}  // namespace

Weekday weekday_from_string(const std::string& s) {
  std::string lower;
  for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  for (int d = 0; d < 7; ++d)
    if (lower.rfind(kDayNames[d], 0) == 0) return static_cast<Weekday>(d);
  throw std::invalid_argument(fmt::format("unknown weekday '{}'", s));
}

std::string to_string(Weekday d) { return kDayNames[static_cast<int>(d)]; }

Weekday advance(Weekday start, int offset) {
  int d = (static_cast<int>(start) + offset) % 7;
  if (d < 0) d += 7;
  return static_cast<Weekday>(d);
}

int PeriodConfig::periods_per_day() const {
  return static_cast<int>(std::lround(1440.0 / period_minutes));
}

double PeriodConfig::kwh_per_amp_period() const { return voltage * (period_minutes / 60.0) / 1000.0; }

double kwh_to_amp_periods(double kwh, double voltage, double period_minutes) {
  if (!(kwh > 0.0) || !(voltage > 0.0) || !(period_minutes > 0.0))
    throw std::invalid_argument("kwh_to_amp_periods: arguments must be positive");
  return kwh * 1000.0 / voltage / (period_minutes / 60.0);
}

double amp_periods_to_kwh(double amp_periods, double voltage, double period_minutes) {
  return amp_periods * voltage * (period_minutes / 60.0) / 1000.0;
}

// Stats ------------------------------------------------------------------------

void WorkloadStats::validate() const {
  for (const auto& d : days)
    if (!(d.mean_sessions > 0.0) || !(d.mean_duration_hours > 0.0) || !(d.mean_energy_kwh > 0.0))
      throw std::invalid_argument("workload stats: all means must be positive");
  for (const auto* w : {&weekday_hourly, &weekend_hourly}) {
    double sum = std::accumulate(w->begin(), w->end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("workload stats: hourly weights must sum to 1");
    for (double x : *w)
      if (x < 0.0) throw std::invalid_argument("workload stats: negative hourly weight");
  }
}

namespace {

std::array<double, 24> normalized(std::array<double, 24> w) {
  double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= sum;
  return w;
}

}  // namespace

WorkloadStats caltech_stats() {
  WorkloadStats s;
  s.days[0] = {41.32, 3.94, 10.05};
  s.days[1] = {71.00, 6.14, 9.54};
  s.days[2] = {76.73, 6.24, 8.94};
  s.days[3] = {75.45, 6.22, 8.75};
  s.days[4] = {78.50, 5.96, 8.47};
  s.days[5] = {77.18, 6.71, 9.04};
  s.days[6] = {43.32, 5.01, 10.15};
  s.weekday_hourly = normalized({0.5, 0.3, 0.2, 0.2, 0.3, 1.0, 3.0, 10.0, 16.0, 13.0, 7.0, 5.0,
                                 5.0, 5.0, 4.0, 3.0, 3.0, 3.0, 5.0, 4.0, 3.0, 2.0, 1.0, 0.7});
  s.weekend_hourly = normalized({0.5, 0.4, 0.3, 0.3, 0.3, 0.5, 1.0, 2.0, 4.0, 5.0, 6.0, 6.0,
                                 6.0, 6.0, 6.0, 5.0, 5.0, 5.0, 5.0, 4.0, 3.0, 2.0, 1.5, 1.0});
  return s;
}

WorkloadStats scale_sessions(WorkloadStats stats, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("session scale factor must be > 0");
  for (auto& d : stats.days) d.mean_sessions *= factor;
  return stats;
}

WorkloadStats stats_from_json(const json& j) {
  WorkloadStats s;
  const auto& days = j.at("days");
  for (int d = 0; d < 7; ++d) {
    const auto& jd = days.at(kDayNames[d]);
    s.days[d] = {jd.at("mean_sessions").get<double>(), jd.at("mean_duration_hours").get<double>(),
                 jd.at("mean_energy_kwh").get<double>()};
  }
  const auto& h = j.at("hourly_weights");
  auto read = [](const json& a) {
    auto v = a.get<std::vector<double>>();
    if (v.size() != 24) throw std::invalid_argument("hourly weights must have 24 entries");
    std::array<double, 24> w{};
    std::copy(v.begin(), v.end(), w.begin());
    return w;
  };
  if (h.is_array()) {
    s.weekday_hourly = s.weekend_hourly = read(h);
  } else {
    s.weekday_hourly = read(h.at("weekday"));
    s.weekend_hourly = read(h.at("weekend"));
  }
  s.validate();
  return s;
}

json stats_to_json(const WorkloadStats& stats) {
  json j;
  for (int d = 0; d < 7; ++d)
    j["days"][kDayNames[d]] = {{"mean_sessions", stats.days[d].mean_sessions},
                               {"mean_duration_hours", stats.days[d].mean_duration_hours},
                               {"mean_energy_kwh", stats.days[d].mean_energy_kwh}};
  j["hourly_weights"]["weekday"] = stats.weekday_hourly;
  j["hourly_weights"]["weekend"] = stats.weekend_hourly;
  return j;
}

WorkloadStats load_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open stats file '{}'", path));
  return stats_from_json(json::parse(in));
}

// Datasets ---------------------------------------------------------------------

DatasetLoad parse_dataset(const json& records, const ChargingNetwork& network, const PeriodConfig& periods) {
  if (!records.is_array()) throw std::invalid_argument("dataset must be a JSON array");
  DatasetLoad out;
  for (const auto& r : records) {
    Session s;
    s.id = r.at("id").get<std::string>();
    s.evse_id = r.at("evse_id").get<std::string>();
    if (!network.find_evse(s.evse_id))
      throw std::invalid_argument(fmt::format("session {}: unknown EVSE id '{}'", s.id, s.evse_id));
    double connect = r.at("connect_minute").get<double>();
    double disconnect = r.at("disconnect_minute").get<double>();
    s.original_kwh = r.at("kwh").get<double>();
    if (disconnect <= connect || !(s.original_kwh > 0.0)) {
      ++out.dropped;
      continue;
    }
    s.arrival = static_cast<int>(std::floor(connect / periods.period_minutes + 1e-9));
    s.departure = static_cast<int>(std::ceil(disconnect / periods.period_minutes - 1e-9));
    if (s.departure <= s.arrival) s.departure = s.arrival + 1;
    s.requested_energy = kwh_to_amp_periods(s.original_kwh, periods.voltage, periods.period_minutes);
    out.sessions.push_back(std::move(s));
  }
  std::stable_sort(out.sessions.begin(), out.sessions.end(),
                   [](const Session& a, const Session& b) { return a.arrival < b.arrival; });
  return out;
}

DatasetLoad load_dataset(const std::string& path, const ChargingNetwork& network, const PeriodConfig& periods) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open dataset '{}'", path));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(fmt::format("cannot parse dataset '{}': {}", path, e.what()));
  }
  return parse_dataset(j, network, periods);
}

json dataset_to_json(std::span<const Session> sessions, const PeriodConfig& periods) {
  json a = json::array();
  for (const auto& s : sessions)
    a.push_back({{"id", s.id},
                 {"evse_id", s.evse_id},
                 {"connect_minute", s.arrival * periods.period_minutes},
                 {"disconnect_minute", s.departure * periods.period_minutes},
                 {"kwh", s.original_kwh}});
  return a;
}

void save_dataset(std::span<const Session> sessions, const PeriodConfig& periods, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write dataset '{}'", path));
  out << dataset_to_json(sessions, periods).dump(2) << '\n';
}

// Generator --------------------------------------------------------------------

std::vector<Session> generate_workload(const WorkloadStats& stats, std::span<const Weekday> days,
                                       std::uint64_t seed, const ChargingNetwork& network,
                                       const PeriodConfig& periods) {
  if (days.empty()) return {};
  stats.validate();
  if (network.evses.empty()) throw std::invalid_argument("network has no EVSEs");
  std::mt19937_64 rng(seed);
  const int per_day = periods.periods_per_day();
  const int horizon_end = per_day * static_cast<int>(days.size());
  constexpr double kMinDurationHours = 0.5;
  constexpr double kMinEnergyKwh = 0.5;

  struct Draft {
    int arrival;
    int departure;
    double kwh;
    std::string id;
  };
  std::vector<Draft> drafts;
  for (std::size_t day = 0; day < days.size(); ++day) {
    const DayStats& ds = stats.days[static_cast<int>(days[day])];
    const auto& weights = stats.hourly(days[day]);
    int count = poisson(rng, ds.mean_sessions);
    for (int n = 0; n < count; ++n) {
      double u = uniform01(rng);
      int hour = 0;
      double acc = weights[0];
      while (u > acc && hour < 23) acc += weights[++hour];
      double minute = 1440.0 * day + 60.0 * (hour + uniform01(rng));
      double hours = kMinDurationHours + exponential(rng, std::max(ds.mean_duration_hours - kMinDurationHours, 1e-3));
      double kwh = kMinEnergyKwh + exponential(rng, std::max(ds.mean_energy_kwh - kMinEnergyKwh, 1e-3));
      int arrival = static_cast<int>(std::floor(minute / periods.period_minutes));
      int departure = static_cast<int>(std::ceil((minute + 60.0 * hours) / periods.period_minutes));
      departure = std::min(std::max(departure, arrival + 1), horizon_end);
      if (departure <= arrival) continue;
      drafts.push_back({arrival, departure, kwh, fmt::format("d{}-s{:03d}", day, n)});
    }
  }
  std::stable_sort(drafts.begin(), drafts.end(), [](const Draft& a, const Draft& b) { return a.arrival < b.arrival; });

  std::vector<int> busy_until(network.evses.size(), 0);
  std::vector<Session> sessions;
  std::vector<std::size_t> free;
  for (const auto& d : drafts) {
    free.clear();
    for (std::size_t i = 0; i < busy_until.size(); ++i)
      if (busy_until[i] <= d.arrival) free.push_back(i);
    // Draw even when no EVSE is free so the stream does not depend on occupancy.
    double u = uniform01(rng);
    if (free.empty()) continue;
    std::size_t evse = free[std::min(free.size() - 1, static_cast<std::size_t>(u * free.size()))];
    busy_until[evse] = d.departure;

    Session s;
    s.id = d.id;
    s.evse_id = network.evses[evse].id;
    s.arrival = d.arrival;
    s.departure = d.departure;
    // Cap the request at what the EVSE can deliver at full rate.
    double cap_kwh = amp_periods_to_kwh(network.evses[evse].max_pilot * s.duration(), periods.voltage,
                                        periods.period_minutes);
    s.original_kwh = std::min(d.kwh, cap_kwh);
    s.requested_energy = kwh_to_amp_periods(s.original_kwh, periods.voltage, periods.period_minutes);
    sessions.push_back(std::move(s));
  }
  return sessions;
}

void validate_sessions(std::span<const Session> sessions, const ChargingNetwork& network) {
  std::map<std::string, std::vector<std::pair<int, int>>> by_evse;
  for (const auto& s : sessions) {
    if (s.departure <= s.arrival)
      throw std::invalid_argument(fmt::format("session {}: departure must follow arrival", s.id));
    if (!(s.requested_energy > 0.0))
      throw std::invalid_argument(fmt::format("session {}: requested energy must be positive", s.id));
    if (!network.find_evse(s.evse_id))
      throw std::invalid_argument(fmt::format("session {}: unknown EVSE id '{}'", s.id, s.evse_id));
    by_evse[s.evse_id].emplace_back(s.arrival, s.departure);
  }
  for (auto& [evse, spans] : by_evse) {
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i)
      if (spans[i].first < spans[i - 1].second)
        throw std::invalid_argument(fmt::format("overlapping sessions on EVSE {}", evse));
  }
}

}  // namespace acn
