#ifndef PSMC_HARNESS_HPP
#define PSMC_HARNESS_HPP

#include "psmc/ais.hpp"
#include "psmc/diagnostics.hpp"
#include "psmc/island_io.hpp"
#include "psmc/islands.hpp"
#include "psmc/targets.hpp"

#include <json.hpp>

#include <charconv>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>

/**
 * \file
 * \brief Experiment driver: JSON config → sweep of sampler runs → CSV rows.
 *
 * Every (sweep point, replicate) pair gets the seed
 * derive_seed(master_seed, {point, replicate}); islands inside it use
 * island_seed(that, p). Rows are emitted in sweep-major order regardless of
 * how many workers ran them.
 */

namespace psmc {

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Configuration

enum class TargetKind { gaussian, gmm, logistic };
enum class MethodKind { smc, mcmc, smc_par, mcmc_par, ais };

struct TargetSpec {
  TargetKind kind = TargetKind::gaussian;
  Eigen::Index d = 1;
  Eigen::Index m = 0;
  double sigma = 1.0;
  std::uint64_t seed = 0;
  bool theta_star_ones = false;   ///< gaussian: θ* = 1_d instead of a prior draw
  std::vector<double> gmm_weights;
  std::vector<std::vector<double>> gmm_means;
  std::string csv;                ///< logistic: load data from file instead of generating
  double prior_var = 100.0;
};

struct MethodSpec {
  MethodKind kind = MethodKind::smc;
  KernelConfig kernel = HmcConfig{};
  double ess_fraction = 0.5;
  std::size_t max_stages = 1000;
  Resampling resampling = Resampling::multinomial;
  bool adapt_step_size = true;
  std::vector<double> schedule;   ///< smc: fixed schedule (empty = adaptive); ais: required
  std::size_t adapt_window = 50;  ///< mcmc burn-in adaptation window
};

struct SweepPoint {
  std::size_t N = 32;
  std::size_t P = 1;
  std::size_t M = 1;
  std::size_t B = 0;
  std::size_t T = 1;
};

struct ExperimentConfig {
  TargetSpec target;
  MethodSpec method;
  std::vector<SweepPoint> sweep;
  std::size_t replicates = 1;
  std::uint64_t master_seed = 0;
  std::string output;
  std::size_t workers = 1;
};

inline std::string method_name(MethodKind k) {
  switch (k) {
    case MethodKind::smc: return "smc";
    case MethodKind::mcmc: return "mcmc";
    case MethodKind::smc_par: return "smc_par";
    case MethodKind::mcmc_par: return "mcmc_par";
    case MethodKind::ais: return "ais";
  }
  return "?";
}

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("field '" + path + it.key() + "': unknown field");
  }
}

inline const json& require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError("field '" + path + "': expected an object");
  return j;
}

template <class V>
V get_field(const json& obj, const std::string& path, const char* key, V fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  const std::string where = "field '" + path + key + "'";
  if constexpr (std::is_same_v<V, bool>) {
    if (!v.is_boolean()) throw ConfigError(where + ": expected true/false");
    return v.get<bool>();
  } else if constexpr (std::is_same_v<V, std::string>) {
    if (!v.is_string()) throw ConfigError(where + ": expected a string");
    return v.get<std::string>();
  } else if constexpr (std::is_integral_v<V>) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      throw ConfigError(where + ": expected a non-negative integer");
    return v.get<V>();
  } else {
    if (!v.is_number()) throw ConfigError(where + ": expected a number");
    return v.get<V>();
  }
}

inline std::vector<double> get_reals(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError(where + ": expected an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline KernelConfig parse_kernel(const json& j, const std::string& path) {
  require_object(j, path);
  const auto type = get_field<std::string>(j, path, "type", "hmc");
  if (type == "hmc") {
    reject_unknown(j, path, {"type", "step_size", "leapfrog_steps", "target_accept", "mass"});
    HmcConfig h;
    h.step_size = get_field(j, path, "step_size", h.step_size);
    h.leapfrog_steps = get_field(j, path, "leapfrog_steps", h.leapfrog_steps);
    h.target_accept = get_field(j, path, "target_accept", h.target_accept);
    if (j.contains("mass")) {
      auto m = get_reals(j.at("mass"), "field '" + path + "mass'");
      h.mass = Eigen::Map<Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
    }
    try {
      validate(h);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("field '" + path.substr(0, path.size() - 1) + "': " + e.what());
    }
    return h;
  }
  if (type == "pcn") {
    reject_unknown(j, path, {"type", "beta", "use_scaling", "scaling_floor", "target_accept"});
    PcnConfig p;
    p.beta = get_field(j, path, "beta", p.beta);
    p.use_scaling = get_field(j, path, "use_scaling", p.use_scaling);
    p.scaling_floor = get_field(j, path, "scaling_floor", p.scaling_floor);
    p.target_accept = get_field(j, path, "target_accept", p.target_accept);
    try {
      validate(p);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("field '" + path.substr(0, path.size() - 1) + "': " + e.what());
    }
    return p;
  }
  throw ConfigError("field '" + path + "type': expected \"hmc\" or \"pcn\"");
}

inline TargetSpec parse_target(const json& j) {
  const std::string path = "target.";
  require_object(j, "target");
  reject_unknown(j, path, {"kind", "d", "m", "sigma", "seed", "theta_star", "weights", "means", "csv", "prior_var"});
  TargetSpec t;
  const auto kind = get_field<std::string>(j, path, "kind", "gaussian");
  if (kind == "gaussian")
    t.kind = TargetKind::gaussian;
  else if (kind == "gmm")
    t.kind = TargetKind::gmm;
  else if (kind == "logistic")
    t.kind = TargetKind::logistic;
  else
    throw ConfigError("field 'target.kind': expected \"gaussian\", \"gmm\" or \"logistic\"");
  t.d = get_field<Eigen::Index>(j, path, "d", t.kind == TargetKind::logistic ? 15 : 1);
  t.m = get_field<Eigen::Index>(j, path, "m", t.kind == TargetKind::logistic ? 690 : 0);
  t.sigma = get_field(j, path, "sigma", t.sigma);
  if (!(t.sigma > 0.0)) throw ConfigError("field 'target.sigma': must be positive");
  t.seed = get_field<std::uint64_t>(j, path, "seed", 0);
  const auto star = get_field<std::string>(j, path, "theta_star", "prior");
  if (star != "prior" && star != "ones") throw ConfigError("field 'target.theta_star': expected \"prior\" or \"ones\"");
  t.theta_star_ones = star == "ones";
  if (j.contains("weights")) t.gmm_weights = get_reals(j.at("weights"), "field 'target.weights'");
  if (j.contains("means")) {
    if (!j.at("means").is_array()) throw ConfigError("field 'target.means': expected an array of arrays");
    for (const auto& row : j.at("means")) t.gmm_means.push_back(get_reals(row, "field 'target.means'"));
  }
  t.csv = get_field<std::string>(j, path, "csv", "");
  t.prior_var = get_field(j, path, "prior_var", t.prior_var);
  return t;
}

inline MethodSpec parse_method(const json& j) {
  const std::string path = "method.";
  require_object(j, "method");
  reject_unknown(j, path,
                 {"name", "kernel", "ess_fraction", "max_stages", "resampling", "adapt", "schedule", "adapt_window"});
  MethodSpec m;
  const auto name = get_field<std::string>(j, path, "name", "smc");
  if (name == "smc")
    m.kind = MethodKind::smc;
  else if (name == "mcmc")
    m.kind = MethodKind::mcmc;
  else if (name == "smc_par")
    m.kind = MethodKind::smc_par;
  else if (name == "mcmc_par")
    m.kind = MethodKind::mcmc_par;
  else if (name == "ais")
    m.kind = MethodKind::ais;
  else
    throw ConfigError("field 'method.name': expected smc, mcmc, smc_par, mcmc_par or ais");
  if (j.contains("kernel")) m.kernel = parse_kernel(j.at("kernel"), "method.kernel.");
  m.ess_fraction = get_field(j, path, "ess_fraction", m.ess_fraction);
  if (!(m.ess_fraction > 0.0 && m.ess_fraction < 1.0))
    throw ConfigError("field 'method.ess_fraction': must lie in (0, 1)");
  m.max_stages = get_field(j, path, "max_stages", m.max_stages);
  const auto rs = get_field<std::string>(j, path, "resampling", "multinomial");
  if (rs == "multinomial")
    m.resampling = Resampling::multinomial;
  else if (rs == "systematic")
    m.resampling = Resampling::systematic;
  else if (rs == "none")
    m.resampling = Resampling::none;
  else
    throw ConfigError("field 'method.resampling': expected multinomial, systematic or none");
  m.adapt_step_size = get_field(j, path, "adapt", m.adapt_step_size);
  m.adapt_window = get_field(j, path, "adapt_window", m.adapt_window);
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    if (s.is_string()) {
      if (s.get<std::string>() != "neal") throw ConfigError("field 'method.schedule': expected \"neal\" or a list");
      m.schedule = make_neal_schedule();
    } else {
      m.schedule = get_reals(s, "field 'method.schedule'");
    }
    try {
      validate_schedule(m.schedule);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("field 'method.schedule': ") + e.what());
    }
  }
  if (m.kind == MethodKind::ais && m.schedule.empty()) m.schedule = make_neal_schedule();
  return m;
}

inline SweepPoint parse_sweep_point(const json& j, std::size_t index) {
  const std::string path = "sweep[" + std::to_string(index) + "].";
  require_object(j, path.substr(0, path.size() - 1));
  reject_unknown(j, path, {"N", "P", "M", "B", "T"});
  SweepPoint s;
  s.N = get_field(j, path, "N", s.N);
  s.P = get_field(j, path, "P", s.P);
  s.M = get_field(j, path, "M", s.M);
  s.B = get_field(j, path, "B", s.B);
  s.T = get_field(j, path, "T", s.T);
  if (s.N < 1) throw ConfigError("field '" + path + "N': must be >= 1");
  if (s.P < 1) throw ConfigError("field '" + path + "P': must be >= 1");
  if (s.T < 1) throw ConfigError("field '" + path + "T': must be >= 1");
  return s;
}

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

}  // namespace detail

/// Parse an experiment configuration from JSON text.
inline ExperimentConfig parse_experiment_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config parse error at line " + std::to_string(detail::line_of_offset(text, e.byte)) + ": " +
                      e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  detail::reject_unknown(j, "", {"target", "method", "sweep", "replicates", "master_seed", "output", "workers"});
  ExperimentConfig cfg;
  if (!j.contains("target")) throw ConfigError("field 'target': missing");
  if (!j.contains("method")) throw ConfigError("field 'method': missing");
  cfg.target = detail::parse_target(j.at("target"));
  cfg.method = detail::parse_method(j.at("method"));
  if (!j.contains("sweep") || !j.at("sweep").is_array() || j.at("sweep").empty())
    throw ConfigError("field 'sweep': expected a non-empty array");
  for (std::size_t i = 0; i < j.at("sweep").size(); ++i)
    cfg.sweep.push_back(detail::parse_sweep_point(j.at("sweep")[i], i));
  cfg.replicates = detail::get_field<std::size_t>(j, "", "replicates", 1);
  if (cfg.replicates < 1) throw ConfigError("field 'replicates': must be >= 1");
  cfg.master_seed = detail::get_field<std::uint64_t>(j, "", "master_seed", 0);
  cfg.output = detail::get_field<std::string>(j, "", "output", "");
  cfg.workers = detail::get_field<std::size_t>(j, "", "workers", 1);

  const bool single = cfg.method.kind == MethodKind::smc || cfg.method.kind == MethodKind::mcmc;
  for (std::size_t i = 0; i < cfg.sweep.size(); ++i)
    if (single && cfg.sweep[i].P != 1)
      throw ConfigError("field 'sweep[" + std::to_string(i) + "].P': method " + method_name(cfg.method.kind) +
                        " runs a single island; use the _par variant");
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

// ---------------------------------------------------------------------------
// Targets and methods

using AnyTarget = std::variant<GaussianLinearModel, GmmTarget, LogisticTarget>;

inline AnyTarget build_target(const TargetSpec& t) {
  switch (t.kind) {
    case TargetKind::gaussian:
      if (t.theta_star_ones) return make_gaussian_target(t.d, t.m, t.sigma, t.seed, ParamVector::Ones(t.d));
      return make_gaussian_target(t.d, t.m, t.sigma, t.seed);
    case TargetKind::gmm: {
      if (t.gmm_weights.empty()) return make_gmm_target(t.d);
      std::vector<ParamVector> means;
      for (const auto& m : t.gmm_means)
        means.emplace_back(Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size())));
      return GmmTarget(t.gmm_weights, std::move(means));
    }
    case TargetKind::logistic:
      if (!t.csv.empty()) return load_logistic_csv(t.csv, t.prior_var);
      return make_logistic_target(t.d, t.m, t.seed, t.prior_var);
  }
  throw ConfigError("unknown target kind");
}

/// Posterior mean when it is known exactly (Gaussian model, mixture).
inline std::optional<Eigen::VectorXd> known_posterior_mean(const AnyTarget& target) {
  if (const auto* g = std::get_if<GaussianLinearModel>(&target)) return analytic_posterior(*g).mean;
  if (const auto* m = std::get_if<GmmTarget>(&target)) return m->mixture_mean();
  return std::nullopt;
}

inline IslandConfig island_config(const MethodSpec& m, const SweepPoint& s) {
  if (m.kind == MethodKind::smc || m.kind == MethodKind::smc_par) {
    SmcConfig c;
    c.n_particles = s.N;
    c.mutation_steps = s.M;
    c.ess_fraction = m.ess_fraction;
    c.kernel = m.kernel;
    c.max_stages = m.max_stages;
    c.resampling = m.resampling;
    c.adapt_step_size = m.adapt_step_size;
    c.fixed_schedule = m.schedule;
    return c;
  }
  McmcConfig c;
  c.n_samples = s.N;
  c.burn_in = s.B;
  c.thin = s.T;
  c.kernel = m.kernel;
  c.mode = m.kind == MethodKind::mcmc ? ChainMode::serial : ChainMode::parallel;
  c.adapt_during_burn_in = m.adapt_step_size;
  c.adapt_window = m.adapt_window;
  return c;
}

inline AisConfig ais_config(const MethodSpec& m, const SweepPoint& s) {
  AisConfig c;
  c.n_samples = s.N;
  c.schedule = m.schedule;
  c.kernel = m.kernel;
  c.mutation_steps = s.M;
  c.adapt_step_size = m.adapt_step_size;
  return c;
}

/// Result of one (sweep point, replicate) run.
struct MethodRun {
  Eigen::VectorXd estimate;      ///< posterior-mean estimate
  double log_evidence = 0.0;
  std::vector<EvalTally> island_epochs;

  std::uint64_t epochs_serial() const {
    std::uint64_t s = 0;
    for (const auto& e : island_epochs) s += e.total();
    return s;
  }
  std::uint64_t epochs_parallel() const {
    std::uint64_t m = 0;
    for (const auto& e : island_epochs) m = std::max(m, e.total());
    return m;
  }
};

template <Target T>
MethodRun run_method(const MethodSpec& method, const SweepPoint& point, const T& target, std::uint64_t seed) {
  MethodRun out;
  if (method.kind == MethodKind::ais) {
    const AisConfig cfg = ais_config(method, point);
    std::vector<WeightedSample> all;
    for (std::size_t p = 0; p < point.P; ++p) {
      auto r = run_ais(cfg, target, island_seed(seed, p));
      out.island_epochs.push_back(r.epochs);
      all.insert(all.end(), std::make_move_iterator(r.samples.begin()), std::make_move_iterator(r.samples.end()));
    }
    out.estimate = ais_estimate(std::span<const WeightedSample>(all), identity_phi);
    out.log_evidence = ais_log_evidence(all);
    return out;
  }
  const auto ens = run_islands(point.P, island_config(method, point), target, seed, 1);
  out.estimate = combine_weighted(ens, identity_phi);
  out.log_evidence = ens.method == IslandMethod::mcmc ? 0.0 : ensemble_log_evidence(ens);
  for (const auto& r : ens.results) out.island_epochs.push_back(r.epochs);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvRow {
  std::string method;
  SweepPoint point;
  std::size_t replicate = 0;
  std::optional<double> mse;
  double log_z = 0.0;
  std::uint64_t epochs_serial = 0;
  std::uint64_t epochs_parallel = 0;
  double wall_seconds = 0.0;
};

inline const char* csv_header() {
  return "method,N,P,M,B,T,replicate,mse_vs_truth,logZ,epochs_serial,epochs_parallel,wall_seconds";
}

/// Shortest string that round-trips to the same double.
inline std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

inline std::string to_csv_line(const CsvRow& r) {
  std::ostringstream os;
  os << r.method << ',' << r.point.N << ',' << r.point.P << ',' << r.point.M << ',' << r.point.B << ','
     << r.point.T << ',' << r.replicate << ',' << (r.mse ? format_real(*r.mse) : "") << ',' << format_real(r.log_z)
     << ',' << r.epochs_serial << ',' << r.epochs_parallel << ',' << std::fixed << std::setprecision(6)
     << r.wall_seconds;
  return os.str();
}

inline void write_csv(std::ostream& out, std::span<const CsvRow> rows, bool header = true) {
  if (header) out << csv_header() << '\n';
  for (const auto& r : rows) out << to_csv_line(r) << '\n';
}

/// Write rows to `path`. With `append`, rows are added to an existing file
/// whose first line is the same header; otherwise the file is replaced.
inline void write_csv_file(const std::string& path, std::span<const CsvRow> rows, bool append = false) {
  bool need_header = true;
  if (append) {
    std::ifstream in(path);
    std::string first;
    if (in && std::getline(in, first)) {
      if (first != csv_header()) throw std::runtime_error(path + ": existing file has a different header");
      need_header = false;
    }
  }
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_csv(out, rows, need_header);
}

/// Run every sweep point × replicate. Independent of `cfg.workers`.
inline std::vector<CsvRow> run_experiment(const ExperimentConfig& cfg) {
  const AnyTarget target = build_target(cfg.target);
  const auto truth = known_posterior_mean(target);
  const std::size_t tasks = cfg.sweep.size() * cfg.replicates;
  std::vector<CsvRow> rows(tasks);

  parallel_for(tasks, cfg.workers, [&](std::size_t task) {
    const std::size_t point_idx = task / cfg.replicates;
    const std::size_t rep = task % cfg.replicates;
    const SweepPoint& point = cfg.sweep[point_idx];
    const std::uint64_t seed = derive_seed(cfg.master_seed, {point_idx, rep});

    const auto start = std::chrono::steady_clock::now();
    const MethodRun run = std::visit([&](const auto& t) { return run_method(cfg.method, point, t, seed); }, target);
    const auto stop = std::chrono::steady_clock::now();

    CsvRow& row = rows[task];
    row.method = method_name(cfg.method.kind);
    row.point = point;
    row.replicate = rep;
    if (truth) row.mse = (run.estimate - *truth).squaredNorm() / static_cast<double>(truth->size());
    row.log_z = run.log_evidence;
    row.epochs_serial = run.epochs_serial();
    row.epochs_parallel = run.epochs_parallel();
    row.wall_seconds = std::chrono::duration<double>(stop - start).count();
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Rate fitting

/// A CSV file as header names plus string cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("csv: empty input");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells == t.header) continue;  // header repeated by concatenated files
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  return read_csv(in);
}

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;    ///< distinct x values used
  std::size_t filtered = 0;  ///< rows dropped for nonpositive or missing values
};

/// Least squares of log(mean y) on log x, where y is averaged over all rows
/// sharing an x value. `x_column` may be "NP" (N·P) when no such column exists.
inline RateFit fit_rate(const CsvTable& table, const std::string& x_column, const std::string& y_column) {
  auto cell = [&](const std::vector<std::string>& row, std::size_t c) -> std::optional<double> {
    if (c >= row.size() || row[c].empty()) return std::nullopt;
    try {
      return std::stod(row[c]);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };
  auto value = [&](const std::vector<std::string>& row, const std::string& name) -> std::optional<double> {
    if (auto c = table.column(name)) return cell(row, *c);
    auto n = cell(row, *table.column("N"));
    auto p = cell(row, *table.column("P"));
    if (n && p) return *n * *p;
    return std::nullopt;
  };
  // Resolve column names up front so an unknown name fails even on an empty table.
  if (!table.column(x_column) && !(x_column == "NP" && table.column("N") && table.column("P")))
    throw std::invalid_argument("fit_rate: no column named '" + x_column + "'");
  if (!table.column(y_column)) throw std::invalid_argument("fit_rate: no column named '" + y_column + "'");

  RateFit fit;
  std::map<double, std::pair<double, std::size_t>> groups;
  for (const auto& row : table.rows) {
    const auto x = value(row, x_column);
    const auto y = value(row, y_column);
    if (!x || !y || !(*x > 0.0) || !(*y > 0.0) || !std::isfinite(*x) || !std::isfinite(*y)) {
      ++fit.filtered;
      continue;
    }
    auto& g = groups[*x];
    g.first += *y;
    g.second += 1;
  }
  if (groups.size() < 3) throw std::invalid_argument("fit_rate: need at least three distinct positive x values");

  std::vector<double> lx, ly;
  for (const auto& [x, g] : groups) {
    lx.push_back(std::log(x));
    ly.push_back(std::log(g.first / static_cast<double>(g.second)));
  }
  const double n = static_cast<double>(lx.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  fit.points = lx.size();
  return fit;
}

/// Fit on rows produced in-process.
inline RateFit fit_rate(std::span<const CsvRow> rows, const std::string& x_column, const std::string& y_column) {
  std::stringstream ss;
  write_csv(ss, rows);
  return fit_rate(read_csv(ss), x_column, y_column);
}

}  // namespace psmc

#endif
