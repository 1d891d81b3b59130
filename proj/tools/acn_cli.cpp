#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "acn/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool dry_run = false;
  int jobs = 1;
};

acn::ExperimentConfig resolve(const CommonFlags& f) {
  acn::ExperimentConfig cfg = f.config.empty() ? acn::resolve_config(json::object()) : acn::load_config(f.config);
  if (f.seed) cfg.workload.seed = *f.seed;
  if (!f.out.empty()) cfg.output_dir = f.out;
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  out << text;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

int cmd_simulate(const CommonFlags& f) {
  const auto cfg = resolve(f);
  if (f.dry_run) {
    std::cout << dump(acn::config_to_json(cfg));
    return 0;
  }
  const acn::SimResult r = acn::simulate(cfg);
  json summary = acn::summary_json(r);
  summary["config"] = acn::config_to_json(cfg);
  const fs::path dir(cfg.output_dir);
  write_file(dir / "summary.json", dump(summary));
  write_file(dir / "traces.csv", acn::traces_csv(r));
  write_file(dir / "load.csv", acn::load_csv(r));
  std::cout << fmt::format("{} scenario {}: demand_met {:.4f}, wrote {}\n", r.algorithm, r.scenario, acn::demand_met(r),
                           dir.string());
  return 0;
}

int cmd_sweep(const CommonFlags& f) {
  const auto cfg = resolve(f);
  if (f.dry_run) {
    std::cout << dump(acn::config_to_json(cfg));
    return 0;
  }
  const auto rows = acn::sweep_capacity(cfg, f.jobs);
  const std::string csv = acn::sweep_csv(rows);
  const fs::path dir(cfg.output_dir);
  write_file(dir / "sweep_capacity.csv", csv);
  write_file(dir / "config.json", dump(acn::config_to_json(cfg)));
  std::cout << csv;
  return 0;
}

int cmd_profit(const CommonFlags& f) {
  const auto cfg = resolve(f);
  if (f.dry_run) {
    std::cout << dump(acn::config_to_json(cfg));
    return 0;
  }
  const auto rows = acn::profit_table(cfg, f.jobs);
  json table = json::array();
  for (const auto& r : rows)
    table.push_back({{"algorithm", r.algorithm},
                     {"profit", r.profit},
                     {"energy_cost", r.energy_cost},
                     {"demand_charge", r.demand_charge},
                     {"revenue", r.revenue},
                     {"demand_met", r.demand_met},
                     {"peak_kw", r.peak_kw}});
  const std::string csv = acn::profit_csv(rows);
  const fs::path dir(cfg.output_dir);
  write_file(dir / "profit.csv", csv);
  write_file(dir / "profit.json", dump({{"rows", table}, {"config", acn::config_to_json(cfg)}}));
  std::cout << csv;
  return 0;
}

int cmd_generate(const CommonFlags& f) {
  const auto cfg = resolve(f);
  if (f.dry_run) {
    std::cout << dump(acn::config_to_json(cfg));
    return 0;
  }
  const auto network = acn::build_network(cfg);
  const auto sessions = acn::build_workload(cfg, network);
  const fs::path path = fs::path(cfg.output_dir) / "sessions.json";
  write_file(path, dump(acn::dataset_to_json(sessions, cfg.periods)));
  std::cout << fmt::format("{} sessions written to {}\n", sessions.size(), path.string());
  return 0;
}

int cmd_validate(const CommonFlags& f, const std::string& dataset) {
  const auto cfg = resolve(f);
  if (!fs::is_regular_file(dataset)) throw std::invalid_argument(fmt::format("dataset file not found: {}", dataset));
  const auto network = acn::build_network(cfg);
  const auto loaded = acn::load_dataset(dataset, network, cfg.periods);
  acn::validate_sessions(loaded.sessions, network);
  double kwh = 0.0;
  for (const auto& s : loaded.sessions) kwh += s.original_kwh;
  std::cout << dump({{"dataset", dataset},
                     {"sessions", loaded.sessions.size()},
                     {"dropped", loaded.dropped},
                     {"requested_kwh", kwh},
                     {"valid", true}});
  return 0;
}

void add_common(CLI::App* sub, CommonFlags& f, bool with_jobs) {
  sub->add_option("--config", f.config, "Experiment config (JSON)");
  sub->add_option("--seed", f.seed, "Override the workload seed");
  sub->add_option("--out", f.out, "Override the output directory");
  sub->add_flag("--dry-run", f.dry_run, "Validate and print the resolved config only");
  if (with_jobs) sub->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive EV charging scheduler and simulator"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string dataset;

  auto* simulate = app.add_subcommand("simulate", "Run one simulation and write summary.json, traces.csv, load.csv");
  add_common(simulate, flags, false);
  auto* sweep = app.add_subcommand("sweep-capacity", "Demand met per transformer capacity and algorithm");
  add_common(sweep, flags, true);
  auto* profit = app.add_subcommand("profit", "Operator profit per algorithm with an offline reference");
  add_common(profit, flags, true);
  auto* generate = app.add_subcommand("generate-workload", "Write synthetic sessions to sessions.json");
  add_common(generate, flags, false);
  auto* validate = app.add_subcommand("validate-dataset", "Check a session dataset against the network");
  add_common(validate, flags, false);
  validate->add_option("dataset", dataset, "Session dataset (JSON)")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (simulate->parsed()) return cmd_simulate(flags);
    if (sweep->parsed()) return cmd_sweep(flags);
    if (profit->parsed()) return cmd_profit(flags);
    if (generate->parsed()) return cmd_generate(flags);
    if (validate->parsed()) return cmd_validate(flags, dataset);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
