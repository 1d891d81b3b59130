#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "acn/billing.hpp"
#include "acn/infra.hpp"
#include "acn/simulator.hpp"
#include "acn/workload.hpp"
#include "json.hpp"

namespace acn {

/// Network source: a preset ("caltech" or "three-phase") or a JSON file.
struct NetworkSpec {
  std::string preset = "caltech";
  std::string file;
  int evse_count = 10;
  double transformer_kva = 150.0;
};

/// Workload source: a dataset file or the synthetic generator.
struct WorkloadSpec {
  std::string file;
  /// "caltech" or a path to a statistics JSON file.
  std::string stats = "caltech";
  double session_scale = 1.0;
  int days = 1;
  Weekday start_day = Weekday::mon;
  std::uint64_t seed = 1;
};

struct SweepSpec {
  std::string parameter = "capacity_kw";
  std::vector<double> values;
};

/// Fully resolved experiment. Every default is explicit so that the JSON
/// form alone reproduces a run.
struct ExperimentConfig {
  NetworkSpec network;
  WorkloadSpec workload;
  /// Preset names (asa-qc, asa-pm, asa-pm-hint, llf, edf, rr, uncontrolled)
  /// or inline {name, kind, utility} objects.
  nlohmann::json algorithms = nlohmann::json::array({"asa-qc"});
  std::string scenario = "II";
  std::string tariff = "sce-tou4-summer";
  SweepSpec sweep;
  std::string output_dir = "out";

  PeriodConfig periods;
  int max_horizon = 144;
  int recompute_period = 1;
  ConstraintMode constraint_mode = ConstraintMode::soc;
  SolverOptions solver;
  RampdownParams rampdown;
  std::optional<bool> rampdown_enabled;
  double revenue_per_kwh = 0.30;
  /// Length of the tariff's billing cycle; shorter simulations prorate the
  /// demand charge by simulated_days / billing_days.
  int billing_days = 30;
  /// Optimal peak of a comparable earlier period for asa-pm-hint. When absent
  /// and the workload is generated, it is the offline-optimal peak on the
  /// same generator with seed + 1.
  std::optional<double> previous_peak_kw;
  /// Adds an offline-optimal reference row to sweep and profit tables.
  bool include_offline = true;
};

/// Fills defaults, resolves relative paths against `base_dir` and validates.
/// Throws std::invalid_argument naming the offending field or path.
ExperimentConfig resolve_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

ChargingNetwork build_network(const ExperimentConfig& cfg);
/// Network with the t1 transformer rated at `capacity_kw` (unity power factor).
ChargingNetwork build_network(const ExperimentConfig& cfg, double capacity_kw);
std::vector<Session> build_workload(const ExperimentConfig& cfg, const ChargingNetwork& network);
/// Workload from the same generator with a different seed.
std::vector<Session> build_workload(const ExperimentConfig& cfg, const ChargingNetwork& network,
                                    std::uint64_t seed);

/// Number of whole days covered by the sessions, at least one.
int simulated_days(std::span<const Session> sessions, const PeriodConfig& periods);
SimOptions sim_options(const ExperimentConfig& cfg, std::span<const Session> sessions);

/// Context needed to instantiate the named utility presets.
struct PresetContext {
  Tariff tariff;
  PeriodConfig periods;
  Weekday start_day = Weekday::mon;
  int price_periods = 0;
  int days = 1;
  int billing_days = 30;
  double revenue_per_kwh = 0.30;
  double hint_kw = 0.0;
};

/// asa-qc: quick charge + 1e-12 equal share. asa-pm: energy cost + demand
/// charge + 1e-4 quick charge + 1e-12 equal share. asa-pm-hint: asa-pm with
/// the peak hint set.
UtilityConfig utility_preset(const std::string& name, const PresetContext& ctx);
std::vector<AlgorithmSpec> resolve_algorithms(const nlohmann::json& algorithms, const PresetContext& ctx);

/// Peak hint for asa-pm-hint; zero when no estimate is available.
double resolve_peak_hint(const ExperimentConfig& cfg);
PresetContext preset_context(const ExperimentConfig& cfg, std::span<const Session> sessions, double hint_kw);

struct SweepRow {
  double capacity_kw = 0.0;
  std::string algorithm;
  double demand_met = 0.0;
};

struct ProfitRow {
  std::string algorithm;
  double profit = 0.0;
  double energy_cost = 0.0;
  double demand_charge = 0.0;
  double revenue = 0.0;
  double demand_met = 0.0;
  double peak_kw = 0.0;
};

/// One row per (capacity, algorithm) in sweep order.
std::vector<SweepRow> sweep_capacity(const ExperimentConfig& cfg, int jobs);
std::string sweep_csv(std::span<const SweepRow> rows);

/// One row per algorithm, then "offline-optimal" when enabled.
std::vector<ProfitRow> profit_table(const ExperimentConfig& cfg, int jobs);
std::string profit_csv(std::span<const ProfitRow> rows);

/// Runs the first configured algorithm once.
SimResult simulate(const ExperimentConfig& cfg);

/// Evaluates task(i) for i in [0, count) on at most `jobs` threads. Results
/// keep index order; the first failing index's exception is rethrown.
template <class T, class F>
std::vector<T> parallel_map(std::size_t count, int jobs, F task) {
  std::vector<std::optional<T>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        slots[i].emplace(task(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, jobs));
  std::vector<std::jthread> pool;
  for (std::size_t t = 1; t < std::min(threads, count); ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  std::vector<T> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

}  // namespace acn
