#pragma once

#include <complex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace acn {

using Phasor = std::complex<double>;

/// Default tolerance (amps) used by the feasibility checks.
inline constexpr double kFeasibilityTol = 1e-6;

/// Set of pilot signals an EVSE accepts.
///
/// Either a finite sorted list (which always contains 0) or the interval
/// {0} U [min_nonzero, max]. An interval with min_nonzero == 0 is the fully
/// continuous set [0, max].
class RateSet {
 public:
  static RateSet discrete(std::vector<double> rates);
  static RateSet interval(double min_nonzero, double max);

  bool is_discrete() const { return discrete_; }
  double max() const;
  /// Smallest strictly positive member.
  double min_nonzero() const;
  bool contains(double rate, double tol = 1e-9) const;
  /// Largest member <= rate + eps (0 for rates below the smallest nonzero member).
  double floor(double rate, double eps = 1e-9) const;
  /// Smallest member > rate; for intervals, rate + step clipped to the set.
  std::optional<double> next_above(double rate, double interval_step = 1.0) const;
  const std::vector<double>& values() const { return values_; }

 private:
  bool discrete_ = false;
  std::vector<double> values_;  // discrete members, ascending
  double lo_ = 0.0;
  double hi_ = 0.0;
};

struct Evse {
  std::string id;
  double max_pilot = 32.0;
  /// Members of the allowable pilot set when `continuous` is false.
  std::vector<double> allowable_rates;
  double min_nonzero_rate = 6.0;
  /// Phase angle of the EVSE current in degrees, within [-180, 180].
  double phase_angle = 0.0;
  bool continuous = false;

  /// Allowable set honoring the minimum-rate rule.
  RateSet rate_set() const;
  void validate() const;
};

/// One row of the network constraint matrix with its limit and background load.
struct NetworkConstraint {
  std::string id;
  /// One coefficient per EVSE, in network EVSE order.
  std::vector<Phasor> coefficients;
  /// Either a single time-invariant limit or one limit per period.
  std::vector<double> limit;
  /// Empty (no load), a single constant phasor, or one phasor per period.
  std::vector<Phasor> background_load;

  double limit_at(int t) const;
  Phasor load_at(int t) const;
};

struct ChargingNetwork {
  std::vector<Evse> evses;
  std::vector<NetworkConstraint> constraints;
  double nominal_voltage = 208.0;

  std::size_t evse_count() const { return evses.size(); }
  std::optional<std::size_t> find_evse(std::string_view id) const;
  std::optional<std::size_t> find_constraint(std::string_view id) const;
  std::size_t evse_index(std::string_view id) const;
  std::size_t constraint_index(std::string_view id) const;

  /// A_li * e^{j phi_i}: the phasor contributed per amp of EVSE i.
  Phasor unit_phasor(std::size_t constraint, std::size_t evse) const;

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

Phasor aggregate_phasor(const ChargingNetwork& network, std::size_t constraint,
                        std::span<const double> rates, int t);
Phasor aggregate_phasor(const ChargingNetwork& network, std::string_view constraint_id,
                        std::span<const double> rates, int t);

std::vector<bool> check_soc_feasible(const ChargingNetwork& network, std::span<const double> rates,
                                     int t, double tol = kFeasibilityTol);
std::vector<bool> check_affine_feasible(const ChargingNetwork& network,
                                        std::span<const double> rates, int t,
                                        double tol = kFeasibilityTol);

/// True when every constraint passes.
bool soc_feasible(const ChargingNetwork& network, std::span<const double> rates, int t,
                  double tol = kFeasibilityTol);
bool affine_feasible(const ChargingNetwork& network, std::span<const double> rates, int t,
                     double tol = kFeasibilityTol);

enum class ConstraintMode { soc, affine };

bool network_feasible(const ChargingNetwork& network, std::span<const double> rates, int t,
                      ConstraintMode mode, double tol = kFeasibilityTol);

// Presets --------------------------------------------------------------------

/// Phase angles (degrees) of line-to-line EVSE currents for an ABC sequence
/// with V_an at 0 degrees and unity power factor.
inline constexpr double kPhaseAB = 30.0;
inline constexpr double kPhaseBC = -90.0;
inline constexpr double kPhaseCA = 150.0;

/// Line-to-neutral voltages on each side of the 480 V / 208 V delta-wye transformer.
inline constexpr double kPrimaryLineToNeutral = 480.0 / 1.7320508075688772;
inline constexpr double kSecondaryLineToNeutral = 120.0;

/// Per-line current limit for a three-phase transformer of `kva` at the
/// given line-to-neutral voltage: kva * 1000 / (3 * V_ln).
double transformer_line_limit(double kva, double line_to_neutral_voltage);

/// Rate sets of the EVSE types installed in the garage.
std::vector<double> clipper_creek_rates();
std::vector<double> aerovironment_rates();

/// Panel-1 network of the reference garage: 54 line-to-line EVSEs behind one
/// 150 kVA delta-wye transformer (t1).
///
/// Phase allocation: 26 EVSEs on AB (two 8-EVSE pods plus five pairs), 14 on
/// BC and 14 on CA (seven pairs each). Each pod sits on an 80 A line.
///
/// Transformer rows, writing I_ab, I_bc, I_ca for the summed line-to-line
/// EVSE phasors:
///   secondary  I_a = I_ab - I_ca,  I_b = I_bc - I_ab,  I_c = I_ca - I_bc
///   primary    I_A = (I_a - I_c)/4, I_B = (I_b - I_a)/4, I_C = (I_c - I_b)/4
/// where 4 = 480 V / 120 V is the winding ratio. Secondary limits are
/// kva*1000/(3*120 V), primary limits kva*1000/(3*277 V). These rows are a
/// reconstruction of the garage's delta-wye wiring, not measured data.
ChargingNetwork caltech_preset(double transformer_kva = 150.0);

/// Small synthetic network with `evse_count` 32 A EVSEs assigned cyclically to
/// AB, BC, CA behind one delta-wye transformer built the same way as above.
ChargingNetwork three_phase_preset(int evse_count, double transformer_kva);

/// Constraint ids of the t1 transformer rows, shared by both presets.
inline constexpr std::string_view kTransformerPrefix = "t1-";

// Serialization ---------------------------------------------------------------

nlohmann::json network_to_json(const ChargingNetwork& network);
ChargingNetwork network_from_json(const nlohmann::json& j);
ChargingNetwork load_network(const std::string& path);
void save_network(const ChargingNetwork& network, const std::string& path);

}  // namespace acn
