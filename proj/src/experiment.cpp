#include "acn/experiment.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

namespace acn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kQuickChargeTieBreak = 1e-4;
constexpr double kEqualShareTieBreak = 1e-12;
constexpr const char* kOfflineName = "offline-optimal";

std::string to_string(ConstraintMode m) { return m == ConstraintMode::soc ? "soc" : "affine"; }

ConstraintMode constraint_mode_from_string(const std::string& s) {
  if (s == "soc") return ConstraintMode::soc;
  if (s == "affine") return ConstraintMode::affine;
  throw std::invalid_argument(fmt::format("config: constraint_mode must be soc or affine, got '{}'", s));
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(fmt::format("config: {} must be an object", where));
  for (const auto& [key, value] : j.items())
    if (!allowed.contains(key)) throw std::invalid_argument(fmt::format("config: unknown key '{}' in {}", key, where));
}

std::string existing_file(const std::string& path, const fs::path& base_dir, const std::string& what) {
  fs::path p(path);
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  if (!fs::is_regular_file(p)) throw std::invalid_argument(fmt::format("{} not found: {}", what, p.string()));
  return p.string();
}

bool is_tariff_preset(const std::string& name) { return name == "sce-tou4-summer"; }

bool uses_hint(const json& algorithms) {
  for (const auto& a : algorithms) {
    if (a.is_string() && a.get<std::string>() == "asa-pm-hint") return true;
    if (a.is_object() && a.contains("utility") && a["utility"].is_string() &&
        a["utility"].get<std::string>() == "asa-pm-hint")
      return true;
  }
  return false;
}

// Energy-cost terms without an explicit price series follow the tariff.
void fill_prices(UtilityConfig& u, const PresetContext& ctx) {
  for (auto& t : u.terms)
    if (auto* ec = std::get_if<EnergyCost>(&t.component); ec && ec->price_per_kwh.empty())
      ec->price_per_kwh = price_series(ctx.tariff, ctx.start_day, ctx.periods, ctx.price_periods);
}

}  // namespace

ExperimentConfig resolve_config(const json& j, const fs::path& base_dir) {
  check_keys(j,
             {"network", "workload", "algorithms", "scenario", "tariff", "sweep", "output_dir", "periods",
              "max_horizon", "recompute_period", "constraint_mode", "solver", "rampdown", "rampdown_enabled",
              "revenue_per_kwh", "billing_days", "previous_peak_kw", "include_offline"},
             "config");
  ExperimentConfig cfg;

  if (j.contains("network")) {
    const json& n = j["network"];
    if (n.is_string()) {
      std::string s = n.get<std::string>();
      if (s == "caltech" || s == "three-phase")
        cfg.network.preset = s;
      else
        cfg.network = NetworkSpec{"", s};
    } else {
      check_keys(n, {"preset", "file", "evse_count", "transformer_kva"}, "network");
      cfg.network.file = n.value("file", std::string{});
      cfg.network.preset = cfg.network.file.empty() ? n.value("preset", cfg.network.preset) : "";
      cfg.network.evse_count = n.value("evse_count", cfg.network.evse_count);
      cfg.network.transformer_kva = n.value("transformer_kva", cfg.network.transformer_kva);
    }
  }
  if (!cfg.network.file.empty()) {
    cfg.network.file = existing_file(cfg.network.file, base_dir, "network file");
  } else if (cfg.network.preset != "caltech" && cfg.network.preset != "three-phase") {
    throw std::invalid_argument(fmt::format("config: unknown network preset '{}'", cfg.network.preset));
  }
  if (cfg.network.evse_count <= 0 || !(cfg.network.transformer_kva > 0.0))
    throw std::invalid_argument("config: network evse_count and transformer_kva must be positive");

  if (j.contains("workload")) {
    const json& w = j["workload"];
    check_keys(w, {"file", "stats", "session_scale", "days", "start_day", "seed"}, "workload");
    cfg.workload.file = w.value("file", std::string{});
    cfg.workload.stats = w.value("stats", cfg.workload.stats);
    cfg.workload.session_scale = w.value("session_scale", cfg.workload.session_scale);
    cfg.workload.days = w.value("days", cfg.workload.days);
    if (w.contains("start_day")) cfg.workload.start_day = weekday_from_string(w["start_day"].get<std::string>());
    cfg.workload.seed = w.value("seed", cfg.workload.seed);
  }
  if (!cfg.workload.file.empty()) cfg.workload.file = existing_file(cfg.workload.file, base_dir, "workload file");
  if (cfg.workload.stats != "caltech") cfg.workload.stats = existing_file(cfg.workload.stats, base_dir, "stats file");
  if (cfg.workload.days <= 0 || !(cfg.workload.session_scale > 0.0) || !std::isfinite(cfg.workload.session_scale))
    throw std::invalid_argument("config: workload days and session_scale must be positive");

  if (j.contains("algorithms")) {
    cfg.algorithms = j["algorithms"];
    if (!cfg.algorithms.is_array() || cfg.algorithms.empty())
      throw std::invalid_argument("config: algorithms must be a non-empty array");
  }
  cfg.scenario = j.value("scenario", cfg.scenario);
  scenario_preset(cfg.scenario);
  cfg.tariff = j.value("tariff", cfg.tariff);
  if (!is_tariff_preset(cfg.tariff)) cfg.tariff = existing_file(cfg.tariff, base_dir, "tariff file");

  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    check_keys(s, {"parameter", "values"}, "sweep");
    cfg.sweep.parameter = s.value("parameter", cfg.sweep.parameter);
    cfg.sweep.values = s.value("values", std::vector<double>{});
  }
  if (cfg.sweep.parameter != "capacity_kw")
    throw std::invalid_argument(fmt::format("config: unsupported sweep parameter '{}'", cfg.sweep.parameter));
  for (double v : cfg.sweep.values)
    if (!std::isfinite(v) || v <= 0.0) throw std::invalid_argument("config: sweep values must be finite and positive");

  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  if (fs::path(cfg.output_dir).is_relative() && !base_dir.empty()) cfg.output_dir = (base_dir / cfg.output_dir).string();

  if (j.contains("periods")) {
    check_keys(j["periods"], {"period_minutes", "voltage"}, "periods");
    cfg.periods.period_minutes = j["periods"].value("period_minutes", cfg.periods.period_minutes);
    cfg.periods.voltage = j["periods"].value("voltage", cfg.periods.voltage);
  }
  if (!(cfg.periods.period_minutes > 0.0) || !(cfg.periods.voltage > 0.0))
    throw std::invalid_argument("config: period_minutes and voltage must be positive");
  cfg.max_horizon = j.value("max_horizon", cfg.max_horizon);
  cfg.recompute_period = j.value("recompute_period", cfg.recompute_period);
  if (cfg.max_horizon <= 0 || cfg.recompute_period <= 0)
    throw std::invalid_argument("config: max_horizon and recompute_period must be positive");
  if (j.contains("constraint_mode")) cfg.constraint_mode = constraint_mode_from_string(j["constraint_mode"]);
  if (j.contains("solver")) {
    check_keys(j["solver"], {"tol", "max_outer", "max_inner"}, "solver");
    cfg.solver.tol = j["solver"].value("tol", cfg.solver.tol);
    cfg.solver.max_outer = j["solver"].value("max_outer", cfg.solver.max_outer);
    cfg.solver.max_inner = j["solver"].value("max_inner", cfg.solver.max_inner);
  }
  if (j.contains("rampdown")) {
    check_keys(j["rampdown"], {"down_threshold", "up_threshold", "step"}, "rampdown");
    cfg.rampdown.down_threshold = j["rampdown"].value("down_threshold", cfg.rampdown.down_threshold);
    cfg.rampdown.up_threshold = j["rampdown"].value("up_threshold", cfg.rampdown.up_threshold);
    cfg.rampdown.step = j["rampdown"].value("step", cfg.rampdown.step);
  }
  if (j.contains("rampdown_enabled") && !j["rampdown_enabled"].is_null())
    cfg.rampdown_enabled = j["rampdown_enabled"].get<bool>();
  cfg.revenue_per_kwh = j.value("revenue_per_kwh", cfg.revenue_per_kwh);
  cfg.billing_days = j.value("billing_days", cfg.billing_days);
  if (cfg.billing_days <= 0) throw std::invalid_argument("config: billing_days must be positive");
  if (j.contains("previous_peak_kw") && !j["previous_peak_kw"].is_null())
    cfg.previous_peak_kw = j["previous_peak_kw"].get<double>();
  cfg.include_offline = j.value("include_offline", cfg.include_offline);

  // Fail early on malformed algorithm entries.
  PresetContext probe;
  probe.tariff = sce_tou4_summer();
  resolve_algorithms(cfg.algorithms, probe);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument(fmt::format("config file not found: {}", path));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(fmt::format("config {}: {}", path, e.what()));
  }
  return resolve_config(j, fs::path(path).parent_path());
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  if (cfg.network.file.empty())
    j["network"] = {{"preset", cfg.network.preset},
                    {"evse_count", cfg.network.evse_count},
                    {"transformer_kva", cfg.network.transformer_kva}};
  else
    j["network"] = {{"file", cfg.network.file}};
  if (cfg.workload.file.empty())
    j["workload"] = {{"stats", cfg.workload.stats},
                     {"session_scale", cfg.workload.session_scale},
                     {"days", cfg.workload.days},
                     {"start_day", to_string(cfg.workload.start_day)},
                     {"seed", cfg.workload.seed}};
  else
    j["workload"] = {{"file", cfg.workload.file}, {"start_day", to_string(cfg.workload.start_day)}};
  j["algorithms"] = cfg.algorithms;
  j["scenario"] = cfg.scenario;
  j["tariff"] = cfg.tariff;
  j["sweep"] = {{"parameter", cfg.sweep.parameter}, {"values", cfg.sweep.values}};
  j["output_dir"] = cfg.output_dir;
  j["periods"] = {{"period_minutes", cfg.periods.period_minutes}, {"voltage", cfg.periods.voltage}};
  j["max_horizon"] = cfg.max_horizon;
  j["recompute_period"] = cfg.recompute_period;
  j["constraint_mode"] = to_string(cfg.constraint_mode);
  j["solver"] = {{"tol", cfg.solver.tol}, {"max_outer", cfg.solver.max_outer}, {"max_inner", cfg.solver.max_inner}};
  j["rampdown"] = {{"down_threshold", cfg.rampdown.down_threshold},
                   {"up_threshold", cfg.rampdown.up_threshold},
                   {"step", cfg.rampdown.step}};
  j["rampdown_enabled"] = cfg.rampdown_enabled ? json(*cfg.rampdown_enabled) : json(nullptr);
  j["revenue_per_kwh"] = cfg.revenue_per_kwh;
  j["billing_days"] = cfg.billing_days;
  j["previous_peak_kw"] = cfg.previous_peak_kw ? json(*cfg.previous_peak_kw) : json(nullptr);
  j["include_offline"] = cfg.include_offline;
  return j;
}

ChargingNetwork build_network(const ExperimentConfig& cfg) {
  if (!cfg.network.file.empty()) return load_network(cfg.network.file);
  return build_network(cfg, cfg.network.transformer_kva);
}

ChargingNetwork build_network(const ExperimentConfig& cfg, double capacity_kw) {
  if (!cfg.network.file.empty())
    throw std::invalid_argument("capacity sweeps need a preset network; the transformer rows of a file are fixed");
  if (cfg.network.preset == "caltech") return caltech_preset(capacity_kw);
  return three_phase_preset(cfg.network.evse_count, capacity_kw);
}

std::vector<Session> build_workload(const ExperimentConfig& cfg, const ChargingNetwork& network) {
  return build_workload(cfg, network, cfg.workload.seed);
}

std::vector<Session> build_workload(const ExperimentConfig& cfg, const ChargingNetwork& network,
                                    std::uint64_t seed) {
  if (!cfg.workload.file.empty()) {
    auto loaded = load_dataset(cfg.workload.file, network, cfg.periods);
    validate_sessions(loaded.sessions, network);
    return std::move(loaded.sessions);
  }
  WorkloadStats stats = cfg.workload.stats == "caltech" ? caltech_stats() : load_stats(cfg.workload.stats);
  stats = scale_sessions(stats, cfg.workload.session_scale);
  std::vector<Weekday> days;
  for (int d = 0; d < cfg.workload.days; ++d) days.push_back(advance(cfg.workload.start_day, d));
  return generate_workload(stats, days, seed, network, cfg.periods);
}

int simulated_days(std::span<const Session> sessions, const PeriodConfig& periods) {
  int end = 0;
  for (const auto& s : sessions) end = std::max(end, s.departure);
  const int per_day = periods.periods_per_day();
  return std::max(1, (end + per_day - 1) / per_day);
}

SimOptions sim_options(const ExperimentConfig& cfg, std::span<const Session> sessions) {
  SimOptions o;
  o.periods = cfg.periods;
  o.max_horizon = cfg.max_horizon;
  o.recompute_period = cfg.recompute_period;
  o.constraint_mode = cfg.constraint_mode;
  o.solver = cfg.solver;
  o.rampdown = cfg.rampdown;
  o.rampdown_enabled = cfg.rampdown_enabled;
  o.start_day = cfg.workload.start_day;
  o.tariff = resolve_tariff(cfg.tariff);
  o.revenue_per_kwh = cfg.revenue_per_kwh;
  o.demand_charge_fraction = std::min(1.0, double(simulated_days(sessions, cfg.periods)) / cfg.billing_days);
  return o;
}

UtilityConfig utility_preset(const std::string& name, const PresetContext& ctx) {
  UtilityConfig u;
  if (name == "asa-qc") {
    u.terms = {{1.0, QuickCharge{}}, {kEqualShareTieBreak, EqualShare{}}};
    return u;
  }
  if (name != "asa-pm" && name != "asa-pm-hint") throw std::invalid_argument(fmt::format("unknown utility preset '{}'", name));
  EnergyCost ec;
  ec.revenue_per_kwh = ctx.revenue_per_kwh;
  DemandCharge dc;
  // The simulated window is billed as its share of the cycle, and the proxy
  // spreads that share over the simulated days.
  const double share = std::min(1.0, double(ctx.days) / ctx.billing_days);
  dc.rate_per_kw = ctx.tariff.demand_charge_rate * share;
  dc.billing_days = std::min(ctx.days, ctx.billing_days);
  dc.hint_kw = name == "asa-pm-hint" ? ctx.hint_kw : 0.0;
  u.terms = {{1.0, ec}, {1.0, dc}, {kQuickChargeTieBreak, QuickCharge{}}, {kEqualShareTieBreak, EqualShare{}}};
  fill_prices(u, ctx);
  return u;
}

std::vector<AlgorithmSpec> resolve_algorithms(const json& algorithms, const PresetContext& ctx) {
  std::vector<AlgorithmSpec> out;
  std::set<std::string> names;
  for (const auto& a : algorithms) {
    AlgorithmSpec spec;
    if (a.is_string()) {
      spec.name = a.get<std::string>();
      if (spec.name.starts_with("asa-")) {
        spec.kind = AlgorithmKind::asa;
        spec.utility = utility_preset(spec.name, ctx);
      } else {
        spec.kind = algorithm_kind_from_string(spec.name);
      }
    } else if (a.is_object()) {
      check_keys(a, {"name", "kind", "utility"}, "algorithm");
      spec.name = a.at("name").get<std::string>();
      spec.kind = algorithm_kind_from_string(a.value("kind", std::string("asa")));
      if (spec.kind == AlgorithmKind::asa) {
        if (!a.contains("utility")) throw std::invalid_argument(fmt::format("algorithm '{}' needs a utility", spec.name));
        spec.utility = a["utility"].is_string() ? utility_preset(a["utility"].get<std::string>(), ctx)
                                                : utility_from_json(a["utility"]);
        fill_prices(spec.utility, ctx);
      }
    } else {
      throw std::invalid_argument("config: algorithms entries must be names or objects");
    }
    if (spec.name == kOfflineName || !names.insert(spec.name).second)
      throw std::invalid_argument(fmt::format("config: duplicate or reserved algorithm name '{}'", spec.name));
    out.push_back(std::move(spec));
  }
  return out;
}

PresetContext preset_context(const ExperimentConfig& cfg, std::span<const Session> sessions, double hint_kw) {
  PresetContext ctx;
  ctx.tariff = resolve_tariff(cfg.tariff);
  ctx.periods = cfg.periods;
  ctx.start_day = cfg.workload.start_day;
  int end = 0;
  for (const auto& s : sessions) end = std::max(end, s.departure);
  ctx.price_periods = end + cfg.max_horizon;
  ctx.days = simulated_days(sessions, cfg.periods);
  ctx.billing_days = cfg.billing_days;
  ctx.revenue_per_kwh = cfg.revenue_per_kwh;
  ctx.hint_kw = hint_kw;
  return ctx;
}

double resolve_peak_hint(const ExperimentConfig& cfg) {
  if (cfg.previous_peak_kw) return peak_hint(*cfg.previous_peak_kw);
  if (!cfg.workload.file.empty()) return peak_hint(std::nullopt);
  const ChargingNetwork network = build_network(cfg);
  const auto previous = build_workload(cfg, network, cfg.workload.seed + 1);
  if (previous.empty()) return peak_hint(std::nullopt);
  const SimOptions options = sim_options(cfg, previous);
  const auto utility = utility_preset("asa-pm", preset_context(cfg, previous, 0.0));
  const SimResult off = offline_optimal(network, previous, utility, options);
  return peak_hint(off.billing->peak_kw);
}

std::vector<SweepRow> sweep_capacity(const ExperimentConfig& cfg, int jobs) {
  if (cfg.sweep.values.empty()) throw std::invalid_argument("sweep-capacity: sweep.values is empty");
  const ChargingNetwork base = build_network(cfg);
  const auto sessions = build_workload(cfg, base);
  const double hint = uses_hint(cfg.algorithms) ? resolve_peak_hint(cfg) : 0.0;
  const PresetContext ctx = preset_context(cfg, sessions, hint);
  const auto algorithms = resolve_algorithms(cfg.algorithms, ctx);
  const SimOptions options = sim_options(cfg, sessions);
  const Scenario scenario = scenario_preset(cfg.scenario);
  // The offline reference maximizes delivery, like asa-qc.
  const UtilityConfig offline_utility = utility_preset("asa-qc", ctx);

  const std::size_t per_capacity = algorithms.size() + (cfg.include_offline ? 1 : 0);
  return parallel_map<SweepRow>(cfg.sweep.values.size() * per_capacity, jobs, [&](std::size_t i) {
    const double capacity = cfg.sweep.values[i / per_capacity];
    const std::size_t a = i % per_capacity;
    const ChargingNetwork network = build_network(cfg, capacity);
    if (a == algorithms.size())
      return SweepRow{capacity, kOfflineName, demand_met(offline_optimal(network, sessions, offline_utility, options))};
    return SweepRow{capacity, algorithms[a].name, demand_met(run(network, sessions, algorithms[a], scenario, options))};
  });
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "capacity_kw,algorithm,demand_met\n";
  for (const auto& r : rows) out += fmt::format("{},{},{}\n", r.capacity_kw, r.algorithm, r.demand_met);
  return out;
}

std::vector<ProfitRow> profit_table(const ExperimentConfig& cfg, int jobs) {
  const ChargingNetwork network = build_network(cfg);
  const auto sessions = build_workload(cfg, network);
  const double hint = uses_hint(cfg.algorithms) ? resolve_peak_hint(cfg) : 0.0;
  const PresetContext ctx = preset_context(cfg, sessions, hint);
  const auto algorithms = resolve_algorithms(cfg.algorithms, ctx);
  const SimOptions options = sim_options(cfg, sessions);
  const Scenario scenario = scenario_preset(cfg.scenario);
  const UtilityConfig offline_utility = utility_preset("asa-pm", ctx);

  auto row = [](const std::string& name, const SimResult& r) {
    const BillingResult& b = *r.billing;
    return ProfitRow{name, b.profit, b.energy_cost, b.demand_charge, b.revenue, demand_met(r), b.peak_kw};
  };
  const std::size_t count = algorithms.size() + (cfg.include_offline ? 1 : 0);
  return parallel_map<ProfitRow>(count, jobs, [&](std::size_t i) {
    if (i == algorithms.size()) return row(kOfflineName, offline_optimal(network, sessions, offline_utility, options));
    return row(algorithms[i].name, run(network, sessions, algorithms[i], scenario, options));
  });
}

std::string profit_csv(std::span<const ProfitRow> rows) {
  std::string out = "algorithm,profit,energy_cost,demand_charge,revenue,demand_met,peak_kw\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{},{},{},{}\n", r.algorithm, r.profit, r.energy_cost, r.demand_charge, r.revenue,
                       r.demand_met, r.peak_kw);
  return out;
}

SimResult simulate(const ExperimentConfig& cfg) {
  const ChargingNetwork network = build_network(cfg);
  const auto sessions = build_workload(cfg, network);
  const json first = json::array({cfg.algorithms.front()});
  const double hint = uses_hint(first) ? resolve_peak_hint(cfg) : 0.0;
  const auto algorithms = resolve_algorithms(first, preset_context(cfg, sessions, hint));
  return run(network, sessions, algorithms.front(), scenario_preset(cfg.scenario), sim_options(cfg, sessions));
}

}  // namespace acn
