#include "acn/infra.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

namespace acn {

namespace {

constexpr double kRateEps = 1e-9;

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

// RateSet ----------------------------------------------------------------------

RateSet RateSet::discrete(std::vector<double> rates) {
  RateSet s;
  s.discrete_ = true;
  rates.push_back(0.0);
  std::sort(rates.begin(), rates.end());
  rates.erase(std::unique(rates.begin(), rates.end(),
                          [](double a, double b) { return std::abs(a - b) < kRateEps; }),
              rates.end());
  if (rates.front() < 0.0) throw std::invalid_argument("rate set contains a negative rate");
  s.values_ = std::move(rates);
  return s;
}

RateSet RateSet::interval(double min_nonzero, double max) {
  if (min_nonzero < 0.0 || max < min_nonzero)
    throw std::invalid_argument("invalid rate interval");
  RateSet s;
  s.discrete_ = false;
  s.lo_ = min_nonzero;
  s.hi_ = max;
  return s;
}

double RateSet::max() const { return discrete_ ? values_.back() : hi_; }

double RateSet::min_nonzero() const {
  if (discrete_) return values_.size() > 1 ? values_[1] : 0.0;
  return lo_ > 0.0 ? lo_ : std::min(hi_, 0.0);
}

bool RateSet::contains(double rate, double tol) const {
  if (discrete_) {
    return std::any_of(values_.begin(), values_.end(),
                       [&](double v) { return std::abs(v - rate) <= tol; });
  }
  if (std::abs(rate) <= tol) return true;
  return rate >= lo_ - tol && rate <= hi_ + tol;
}

double RateSet::floor(double rate, double eps) const {
  if (discrete_) {
    auto it = std::upper_bound(values_.begin(), values_.end(), rate + eps);
    return it == values_.begin() ? 0.0 : *std::prev(it);
  }
  if (rate >= hi_) return hi_;
  if (rate + eps < lo_) return 0.0;
  return std::max(rate, lo_ > 0.0 ? lo_ : 0.0);
}

std::optional<double> RateSet::next_above(double rate, double interval_step) const {
  if (discrete_) {
    auto it = std::upper_bound(values_.begin(), values_.end(), rate + kRateEps);
    if (it == values_.end()) return std::nullopt;
    return *it;
  }
  if (rate >= hi_ - kRateEps) return std::nullopt;
  if (rate + kRateEps < lo_) return lo_ > 0.0 ? lo_ : std::min(interval_step, hi_);
  return std::min(rate + interval_step, hi_);
}

// Evse -------------------------------------------------------------------------

RateSet Evse::rate_set() const {
  if (continuous) return RateSet::interval(min_nonzero_rate, max_pilot);
  return RateSet::discrete(allowable_rates);
}

void Evse::validate() const {
  if (id.empty()) throw std::invalid_argument("EVSE id must not be empty");
  if (!(max_pilot > 0.0)) throw std::invalid_argument(fmt::format("EVSE {}: max_pilot must be > 0", id));
  if (phase_angle < -180.0 || phase_angle > 180.0)
    throw std::invalid_argument(fmt::format("EVSE {}: phase angle outside [-180, 180]", id));
  if (min_nonzero_rate < 0.0 || min_nonzero_rate > max_pilot)
    throw std::invalid_argument(fmt::format("EVSE {}: invalid min_nonzero_rate", id));
  if (continuous) return;
  if (allowable_rates.empty())
    throw std::invalid_argument(fmt::format("EVSE {}: allowable_rates must not be empty", id));
  bool has_zero = false;
  for (double r : allowable_rates) {
    if (std::abs(r) < kRateEps) {
      has_zero = true;
      continue;
    }
    if (r < 0.0 || r > max_pilot + kRateEps)
      throw std::invalid_argument(fmt::format("EVSE {}: rate {} outside [0, max_pilot]", id, r));
    if (r < min_nonzero_rate - kRateEps)
      throw std::invalid_argument(
          fmt::format("EVSE {}: rate {} inside the forbidden band (0, {})", id, r, min_nonzero_rate));
  }
  if (!has_zero) throw std::invalid_argument(fmt::format("EVSE {}: allowable_rates must contain 0", id));
}

// NetworkConstraint ------------------------------------------------------------

double NetworkConstraint::limit_at(int t) const {
  if (limit.empty()) throw std::logic_error(fmt::format("constraint {} has no limit", id));
  if (limit.size() == 1 || t < 0) return limit.front();
  return limit[std::min<std::size_t>(static_cast<std::size_t>(t), limit.size() - 1)];
}

Phasor NetworkConstraint::load_at(int t) const {
  if (background_load.empty()) return {0.0, 0.0};
  if (background_load.size() == 1 || t < 0) return background_load.front();
  return background_load[std::min<std::size_t>(static_cast<std::size_t>(t), background_load.size() - 1)];
}

// ChargingNetwork --------------------------------------------------------------

std::optional<std::size_t> ChargingNetwork::find_evse(std::string_view id) const {
  for (std::size_t i = 0; i < evses.size(); ++i)
    if (evses[i].id == id) return i;
  return std::nullopt;
}

std::optional<std::size_t> ChargingNetwork::find_constraint(std::string_view id) const {
  for (std::size_t i = 0; i < constraints.size(); ++i)
    if (constraints[i].id == id) return i;
  return std::nullopt;
}

std::size_t ChargingNetwork::evse_index(std::string_view id) const {
  auto i = find_evse(id);
  if (!i) throw std::out_of_range(fmt::format("unknown EVSE id '{}'", id));
  return *i;
}

std::size_t ChargingNetwork::constraint_index(std::string_view id) const {
  auto i = find_constraint(id);
  if (!i) throw std::out_of_range(fmt::format("unknown constraint id '{}'", id));
  return *i;
}

Phasor ChargingNetwork::unit_phasor(std::size_t constraint, std::size_t evse) const {
  return constraints[constraint].coefficients[evse] *
         std::polar(1.0, deg_to_rad(evses[evse].phase_angle));
}

void ChargingNetwork::validate() const {
  std::set<std::string, std::less<>> ids;
  for (const auto& e : evses) {
    e.validate();
    if (!ids.insert(e.id).second) throw std::invalid_argument(fmt::format("duplicate EVSE id '{}'", e.id));
  }
  std::set<std::string, std::less<>> cids;
  for (const auto& c : constraints) {
    if (!cids.insert(c.id).second)
      throw std::invalid_argument(fmt::format("duplicate constraint id '{}'", c.id));
    if (c.coefficients.size() != evses.size())
      throw std::invalid_argument(fmt::format(
          "constraint {}: {} coefficients for {} EVSEs", c.id, c.coefficients.size(), evses.size()));
    if (c.limit.empty()) throw std::invalid_argument(fmt::format("constraint {}: missing limit", c.id));
    for (double l : c.limit)
      if (!(l >= 0.0)) throw std::invalid_argument(fmt::format("constraint {}: negative limit", c.id));
  }
  if (!(nominal_voltage > 0.0)) throw std::invalid_argument("nominal voltage must be > 0");
}

// Feasibility ------------------------------------------------------------------

namespace {

void check_rates(const ChargingNetwork& network, std::span<const double> rates) {
  if (rates.size() != network.evse_count())
    throw std::invalid_argument(
        fmt::format("rate vector has {} entries, network has {} EVSEs", rates.size(), network.evse_count()));
}

}  // namespace

Phasor aggregate_phasor(const ChargingNetwork& network, std::size_t constraint,
                        std::span<const double> rates, int t) {
  check_rates(network, rates);
  if (constraint >= network.constraints.size())
    throw std::out_of_range(fmt::format("constraint index {} out of range", constraint));
  const auto& c = network.constraints[constraint];
  Phasor sum = c.load_at(t);
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (rates[i] == 0.0 || c.coefficients[i] == Phasor{}) continue;
    sum += network.unit_phasor(constraint, i) * rates[i];
  }
  return sum;
}

Phasor aggregate_phasor(const ChargingNetwork& network, std::string_view constraint_id,
                        std::span<const double> rates, int t) {
  return aggregate_phasor(network, network.constraint_index(constraint_id), rates, t);
}

std::vector<bool> check_soc_feasible(const ChargingNetwork& network, std::span<const double> rates,
                                     int t, double tol) {
  std::vector<bool> ok(network.constraints.size());
  for (std::size_t l = 0; l < ok.size(); ++l)
    ok[l] = std::abs(aggregate_phasor(network, l, rates, t)) <= network.constraints[l].limit_at(t) + tol;
  return ok;
}

std::vector<bool> check_affine_feasible(const ChargingNetwork& network,
                                        std::span<const double> rates, int t, double tol) {
  check_rates(network, rates);
  std::vector<bool> ok(network.constraints.size());
  for (std::size_t l = 0; l < ok.size(); ++l) {
    const auto& c = network.constraints[l];
    double total = std::abs(c.load_at(t));
    for (std::size_t i = 0; i < rates.size(); ++i) total += std::abs(c.coefficients[i]) * rates[i];
    ok[l] = total <= c.limit_at(t) + tol;
  }
  return ok;
}

bool soc_feasible(const ChargingNetwork& network, std::span<const double> rates, int t, double tol) {
  auto ok = check_soc_feasible(network, rates, t, tol);
  return std::all_of(ok.begin(), ok.end(), [](bool b) { return b; });
}

bool affine_feasible(const ChargingNetwork& network, std::span<const double> rates, int t, double tol) {
  auto ok = check_affine_feasible(network, rates, t, tol);
  return std::all_of(ok.begin(), ok.end(), [](bool b) { return b; });
}

bool network_feasible(const ChargingNetwork& network, std::span<const double> rates, int t,
                      ConstraintMode mode, double tol) {
  return mode == ConstraintMode::soc ? soc_feasible(network, rates, t, tol)
                                     : affine_feasible(network, rates, t, tol);
}

// Presets ----------------------------------------------------------------------

double transformer_line_limit(double kva, double line_to_neutral_voltage) {
  return kva * 1000.0 / (3.0 * line_to_neutral_voltage);
}

std::vector<double> clipper_creek_rates() { return {0.0, 8.0, 16.0, 24.0, 32.0}; }

std::vector<double> aerovironment_rates() {
  std::vector<double> r{0.0};
  for (int a = 6; a <= 32; ++a) r.push_back(a);
  return r;
}

namespace {

enum class Phase { ab, bc, ca };

Evse make_evse(std::string id, Phase phase, std::vector<double> rates) {
  Evse e;
  e.id = std::move(id);
  e.max_pilot = 32.0;
  e.allowable_rates = std::move(rates);
  e.min_nonzero_rate = 6.0;
  e.phase_angle = phase == Phase::ab ? kPhaseAB : phase == Phase::bc ? kPhaseBC : kPhaseCA;
  return e;
}

// Appends the six t1 transformer rows for EVSEs with the given phases.
void add_transformer_rows(ChargingNetwork& net, const std::vector<Phase>& phases, double kva) {
  // Secondary line-current coefficient of each line-to-line phase.
  auto secondary = [](char line, Phase p) -> double {
    switch (line) {
      case 'a': return p == Phase::ab ? 1.0 : p == Phase::ca ? -1.0 : 0.0;
      case 'b': return p == Phase::bc ? 1.0 : p == Phase::ab ? -1.0 : 0.0;
      default: return p == Phase::ca ? 1.0 : p == Phase::bc ? -1.0 : 0.0;
    }
  };
  constexpr double kWindingRatio = 4.0;
  const std::size_t n = phases.size();
  const char lines[3] = {'a', 'b', 'c'};
  for (char line : lines) {
    NetworkConstraint c;
    c.id = fmt::format("t1-secondary-{}", line);
    c.limit = {transformer_line_limit(kva, kSecondaryLineToNeutral)};
    for (std::size_t i = 0; i < n; ++i) c.coefficients.emplace_back(secondary(line, phases[i]), 0.0);
    net.constraints.push_back(std::move(c));
  }
  for (int k = 0; k < 3; ++k) {
    char line = lines[k];
    char prev = lines[(k + 2) % 3];
    NetworkConstraint c;
    c.id = fmt::format("t1-primary-{}", static_cast<char>(line - 'a' + 'A'));
    c.limit = {transformer_line_limit(kva, kPrimaryLineToNeutral)};
    for (std::size_t i = 0; i < n; ++i)
      c.coefficients.emplace_back((secondary(line, phases[i]) - secondary(prev, phases[i])) / kWindingRatio, 0.0);
    net.constraints.push_back(std::move(c));
  }
}

}  // namespace

ChargingNetwork caltech_preset(double transformer_kva) {
  ChargingNetwork net;
  net.nominal_voltage = 208.0;
  std::vector<Phase> phases;
  auto add = [&](std::string id, Phase p, std::vector<double> rates) {
    net.evses.push_back(make_evse(std::move(id), p, std::move(rates)));
    phases.push_back(p);
  };
  for (int i = 1; i <= 8; ++i) add(fmt::format("CC-{:02d}", i), Phase::ab, clipper_creek_rates());
  for (int i = 1; i <= 8; ++i) add(fmt::format("AV-{:02d}", i), Phase::ab, aerovironment_rates());
  // Nineteen lines feeding pairs of AeroVironment EVSEs: 5 on AB, 7 on BC, 7 on CA.
  const std::pair<const char*, Phase> pair_groups[] = {{"AB", Phase::ab}, {"BC", Phase::bc}, {"CA", Phase::ca}};
  const int pairs_per_group[] = {5, 7, 7};
  for (int g = 0; g < 3; ++g)
    for (int i = 1; i <= 2 * pairs_per_group[g]; ++i)
      add(fmt::format("{}-{:02d}", pair_groups[g].first, i), pair_groups[g].second, aerovironment_rates());

  add_transformer_rows(net, phases, transformer_kva);
  for (const char* pod : {"CC", "AV"}) {
    NetworkConstraint c;
    c.id = fmt::format("pod-{}", pod);
    c.limit = {80.0};
    for (const auto& e : net.evses)
      c.coefficients.emplace_back(e.id.rfind(pod, 0) == 0 ? 1.0 : 0.0, 0.0);
    net.constraints.push_back(std::move(c));
  }
  net.validate();
  return net;
}

ChargingNetwork three_phase_preset(int evse_count, double transformer_kva) {
  if (evse_count <= 0) throw std::invalid_argument("evse_count must be > 0");
  ChargingNetwork net;
  std::vector<Phase> phases;
  const Phase cycle[] = {Phase::ab, Phase::bc, Phase::ca};
  for (int i = 0; i < evse_count; ++i) {
    Phase p = cycle[i % 3];
    net.evses.push_back(make_evse(fmt::format("EVSE-{:02d}", i + 1), p, aerovironment_rates()));
    phases.push_back(p);
  }
  add_transformer_rows(net, phases, transformer_kva);
  net.validate();
  return net;
}

// Serialization ----------------------------------------------------------------

using nlohmann::json;

json network_to_json(const ChargingNetwork& network) {
  json j;
  j["nominal_voltage"] = network.nominal_voltage;
  j["evses"] = json::array();
  for (const auto& e : network.evses) {
    json je{{"id", e.id},
            {"max_pilot", e.max_pilot},
            {"min_nonzero_rate", e.min_nonzero_rate},
            {"phase_angle", e.phase_angle},
            {"continuous", e.continuous}};
    je["allowable_rates"] = e.allowable_rates;
    j["evses"].push_back(std::move(je));
  }
  auto phasors = [](const std::vector<Phasor>& v) {
    json a = json::array();
    for (const auto& z : v) a.push_back({{"re", z.real()}, {"im", z.imag()}});
    return a;
  };
  j["constraints"] = json::array();
  for (const auto& c : network.constraints) {
    json jc{{"id", c.id}};
    jc["coefficients"] = phasors(c.coefficients);
    if (c.limit.size() == 1)
      jc["limit"] = c.limit.front();
    else
      jc["limit"] = c.limit;
    if (!c.background_load.empty()) jc["background_load"] = phasors(c.background_load);
    j["constraints"].push_back(std::move(jc));
  }
  return j;
}

ChargingNetwork network_from_json(const json& j) {
  ChargingNetwork net;
  net.nominal_voltage = j.value("nominal_voltage", 208.0);
  for (const auto& je : j.at("evses")) {
    Evse e;
    e.id = je.at("id").get<std::string>();
    e.max_pilot = je.value("max_pilot", 32.0);
    e.min_nonzero_rate = je.value("min_nonzero_rate", 6.0);
    e.phase_angle = je.value("phase_angle", 0.0);
    e.continuous = je.value("continuous", false);
    if (je.contains("allowable_rates")) e.allowable_rates = je.at("allowable_rates").get<std::vector<double>>();
    net.evses.push_back(std::move(e));
  }
  auto phasors = [](const json& a) {
    std::vector<Phasor> v;
    for (const auto& z : a) v.emplace_back(z.value("re", 0.0), z.value("im", 0.0));
    return v;
  };
  if (j.contains("constraints")) {
    for (const auto& jc : j.at("constraints")) {
      NetworkConstraint c;
      c.id = jc.at("id").get<std::string>();
      c.coefficients = phasors(jc.at("coefficients"));
      const auto& lim = jc.at("limit");
      if (lim.is_array())
        c.limit = lim.get<std::vector<double>>();
      else
        c.limit = {lim.get<double>()};
      if (jc.contains("background_load")) c.background_load = phasors(jc.at("background_load"));
      net.constraints.push_back(std::move(c));
    }
  }
  net.validate();
  return net;
}

ChargingNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open network file '{}'", path));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(fmt::format("cannot parse network file '{}': {}", path, e.what()));
  }
  return network_from_json(j);
}

void save_network(const ChargingNetwork& network, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write network file '{}'", path));
  out << network_to_json(network).dump(2) << '\n';
}

}  // namespace acn
