// psmc: experiment driver for the samplers in include/psmc.
//
//   psmc run --config exp.json [--out rows.csv] [--workers k] [--seed s] [--append]
//   psmc fit --csv rows.csv --x NP --y mse_vs_truth
//   psmc island --config exp.json --index p [--point i] [--replicate r] --out island.json
//   psmc combine island0.json island1.json ...

#include "psmc/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int cmd_run(const std::string& config_path, const std::string& out, std::optional<std::size_t> workers,
            std::optional<std::uint64_t> seed, bool append) {
  auto cfg = psmc::load_experiment_config(config_path);
  if (!out.empty()) cfg.output = out;
  if (workers) cfg.workers = *workers;
  if (seed) cfg.master_seed = *seed;
  const auto rows = psmc::run_experiment(cfg);
  if (cfg.output.empty() || cfg.output == "-")
    psmc::write_csv(std::cout, rows);
  else
    psmc::write_csv_file(cfg.output, rows, append);
  return 0;
}

int cmd_fit(const std::string& csv, const std::string& x, const std::string& y) {
  const auto table = psmc::read_csv_file(csv);
  const auto fit = psmc::fit_rate(table, x, y);
  std::cout << "slope " << psmc::format_real(fit.slope) << '\n'
            << "intercept " << psmc::format_real(fit.intercept) << '\n'
            << "r2 " << psmc::format_real(fit.r2) << '\n'
            << "points " << fit.points << '\n';
  if (fit.filtered > 0) std::cerr << "warning: " << fit.filtered << " rows with nonpositive or missing values skipped\n";
  std::cout << "filtered " << fit.filtered << '\n';
  return 0;
}

int cmd_island(const std::string& config_path, std::size_t index, std::size_t point, std::size_t replicate,
               const std::string& out, std::optional<std::uint64_t> seed) {
  auto cfg = psmc::load_experiment_config(config_path);
  if (seed) cfg.master_seed = *seed;
  if (cfg.method.kind == psmc::MethodKind::ais) throw psmc::ConfigError("island: ais runs are not island-based");
  if (point >= cfg.sweep.size()) throw psmc::ConfigError("island: --point out of range");
  if (replicate >= cfg.replicates) throw psmc::ConfigError("island: --replicate out of range");
  const auto& sp = cfg.sweep[point];
  if (index >= sp.P) throw psmc::ConfigError("island: --index must be below P");

  const auto target = psmc::build_target(cfg.target);
  const std::uint64_t rep_seed = psmc::derive_seed(cfg.master_seed, {point, replicate});
  const auto island_cfg = psmc::island_config(cfg.method, sp);
  const auto result = std::visit(
      [&](const auto& t) { return psmc::run_island(island_cfg, t, psmc::island_seed(rep_seed, index)); }, target);
  const auto method = std::holds_alternative<psmc::SmcConfig>(island_cfg) ? psmc::IslandMethod::smc
                                                                           : psmc::IslandMethod::mcmc;
  psmc::write_island_file(out, result, method);
  return 0;
}

int cmd_combine(const std::vector<std::string>& files) {
  const auto ens = psmc::merge_island_files(files);
  nlohmann::json j;
  j["islands"] = ens.size();
  j["weights"] = psmc::island_weights(ens);
  const auto w = psmc::combine_weighted(ens, psmc::identity_phi);
  const auto u = psmc::combine_unweighted(ens, psmc::identity_phi);
  j["weighted_mean"] = std::vector<double>(w.data(), w.data() + w.size());
  j["unweighted_mean"] = std::vector<double>(u.data(), u.data() + u.size());
  j["log_evidence"] = ens.method == psmc::IslandMethod::mcmc ? 0.0 : psmc::ensemble_log_evidence(ens);
  j["epochs_serial"] = ens.serial_epochs().total();
  j["epochs_parallel"] = ens.parallel_epochs();
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallel SMC / MCMC experiment driver"};
  app.require_subcommand(1);

  std::string config, out, csv, x = "NP", y = "mse_vs_truth";
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  bool append = false;
  std::size_t index = 0, point = 0, replicate = 0;
  std::vector<std::string> island_files;

  auto* run = app.add_subcommand("run", "run an experiment sweep and write CSV rows");
  run->add_option("--config", config, "experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "CSV output path ('-' for stdout); overrides the config");
  run->add_option("--workers", workers, "worker threads for sweep points and replicates");
  run->add_option("--seed", seed, "master seed; overrides the config");
  run->add_flag("--append", append, "append rows to an existing CSV with the same header");

  auto* fit = app.add_subcommand("fit", "fit a log-log rate to CSV rows");
  fit->add_option("--csv", csv, "CSV produced by run")->required()->check(CLI::ExistingFile);
  fit->add_option("--x", x, "x column (NP = N*P)");
  fit->add_option("--y", y, "y column");

  auto* island = app.add_subcommand("island", "run one island of an experiment and write its JSON result");
  island->add_option("--config", config, "experiment JSON")->required()->check(CLI::ExistingFile);
  island->add_option("--index", index, "island index p < P")->required();
  island->add_option("--point", point, "sweep point index");
  island->add_option("--replicate", replicate, "replicate index");
  island->add_option("--seed", seed, "master seed; overrides the config");
  island->add_option("--out", out, "output JSON path")->required();

  auto* combine = app.add_subcommand("combine", "merge island JSON files and print the combined estimate");
  combine->add_option("files", island_files, "island JSON files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) return cmd_run(config, out, workers, seed, append);
    if (*fit) return cmd_fit(csv, x, y);
    if (*island) return cmd_island(config, index, point, replicate, out, seed);
    if (*combine) return cmd_combine(island_files);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
