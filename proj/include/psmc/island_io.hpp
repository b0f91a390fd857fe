#ifndef PSMC_ISLAND_IO_HPP
#define PSMC_ISLAND_IO_HPP

#include "psmc/islands.hpp"

#include <json.hpp>

#include <fstream>

/**
 * \file
 * \brief JSON form of an IslandResult, used when islands run as separate
 * processes and are merged afterwards.
 *
 *     { "seed": <uint64>, "schedule": [λ...], "logz_offset": <real>,
 *       "logz_residual": <real>, "samples": [[θ...], ...],
 *       "epochs": {"likelihood": <uint>, "gradient": <uint>},
 *       "log_weights": [..]            (optional, weighted islands only)
 *       "method": "smc" | "mcmc" }     (optional, default "smc")
 *
 * Reals are written with round-trip precision, so a result read back is
 * bit-identical to the one written.
 */

namespace psmc {

inline nlohmann::json island_to_json(const IslandResult& r, IslandMethod method = IslandMethod::smc) {
  nlohmann::json j;
  j["seed"] = r.seed;
  j["method"] = method == IslandMethod::smc ? "smc" : "mcmc";
  j["schedule"] = r.schedule;
  j["logz_offset"] = r.logz.offset_sum;
  j["logz_residual"] = r.logz.residual_log;
  auto samples = nlohmann::json::array();
  for (const auto& s : r.samples) samples.push_back(std::vector<double>(s.data(), s.data() + s.size()));
  j["samples"] = std::move(samples);
  j["epochs"] = {{"likelihood", r.epochs.likelihood}, {"gradient", r.epochs.gradient}};
  if (!r.log_weights.empty()) j["log_weights"] = r.log_weights;
  return j;
}

inline IslandResult island_from_json(const nlohmann::json& j, IslandMethod* method = nullptr) {
  try {
    IslandResult r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.schedule = j.at("schedule").get<std::vector<double>>();
    r.logz.offset_sum = j.at("logz_offset").get<double>();
    r.logz.residual_log = j.at("logz_residual").get<double>();
    std::size_t d = 0;
    for (const auto& row : j.at("samples")) {
      auto v = row.get<std::vector<double>>();
      if (!r.samples.empty() && v.size() != d) throw std::invalid_argument("samples differ in dimension");
      d = v.size();
      r.samples.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    r.epochs.likelihood = j.at("epochs").at("likelihood").get<std::uint64_t>();
    r.epochs.gradient = j.at("epochs").at("gradient").get<std::uint64_t>();
    if (j.contains("log_weights")) r.log_weights = j.at("log_weights").get<std::vector<double>>();
    if (!r.log_weights.empty() && r.log_weights.size() != r.samples.size())
      throw std::invalid_argument("log_weights length differs from sample count");
    if (method) *method = j.value("method", std::string("smc")) == "mcmc" ? IslandMethod::mcmc : IslandMethod::smc;
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("island json: ") + e.what());
  }
}

inline void write_island_file(const std::string& path, const IslandResult& r,
                              IslandMethod method = IslandMethod::smc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << island_to_json(r, method).dump(1) << '\n';
}

inline IslandResult read_island_file(const std::string& path, IslandMethod* method = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return island_from_json(j, method);
}

/// Merge island files written by separate processes into one ensemble.
inline IslandEnsemble merge_island_files(std::span<const std::string> paths) {
  if (paths.empty()) throw std::invalid_argument("merge_island_files: no files");
  IslandEnsemble ens;
  for (std::size_t p = 0; p < paths.size(); ++p) {
    IslandMethod m = IslandMethod::smc;
    ens.results.push_back(read_island_file(paths[p], &m));
    if (p == 0)
      ens.method = m;
    else if (m != ens.method)
      throw std::invalid_argument("merge_island_files: mixed smc and mcmc islands");
    ens.seeds.push_back(ens.results.back().seed);
  }
  return ens;
}

}  // namespace psmc

#endif
