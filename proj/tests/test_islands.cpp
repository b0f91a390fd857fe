#include "psmc/island_io.hpp"
#include "psmc/islands.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace psmc;

namespace {

ParamVector vec(std::initializer_list<double> v) {
  ParamVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

IslandResult island(std::vector<ParamVector> samples, double logz) {
  IslandResult r;
  r.samples = std::move(samples);
  r.logz.offset_sum = logz;
  r.logz.residual_log = 0.0;
  r.schedule = {0.0, 1.0};
  return r;
}

IslandEnsemble ensemble(std::vector<IslandResult> rs, IslandMethod m = IslandMethod::smc) {
  IslandEnsemble e;
  e.method = m;
  for (auto& r : rs) {
    e.seeds.push_back(r.seed);
    e.results.push_back(std::move(r));
  }
  return e;
}

SmcConfig small_smc() {
  SmcConfig c;
  c.n_particles = 32;
  c.mutation_steps = 4;
  c.kernel = HmcConfig{.step_size = 0.2, .leapfrog_steps = 5};
  return c;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("psmc_test_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(IslandWeights, Examples) {
  const std::vector<double> equal{-2.0, -2.0, -2.0, -2.0};
  for (double w : island_weights(equal)) EXPECT_DOUBLE_EQ(w, 0.25);
  const std::vector<double> two{0.0, std::log(3.0)};
  auto w = island_weights(two);
  EXPECT_NEAR(w[0], 0.25, 1e-15);
  EXPECT_NEAR(w[1], 0.75, 1e-15);
  const std::vector<double> shifted{-1000.0, -1000.0 + std::log(3.0)};
  w = island_weights(shifted);
  EXPECT_NEAR(w[0], 0.25, 1e-12);
  EXPECT_NEAR(w[1], 0.75, 1e-12);
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> one_dead{-inf, 1.0};
  w = island_weights(one_dead);
  EXPECT_EQ(w[0], 0.0);
  EXPECT_EQ(w[1], 1.0);
  const std::vector<double> all_dead{-inf, -inf};
  EXPECT_THROW(island_weights(all_dead), DegeneratePopulationError);
  EXPECT_THROW(island_weights(std::vector<double>{}), std::invalid_argument);
}

TEST(IslandWeights, SumToOneAndShiftInvariant) {
  Rng rng(1);
  std::normal_distribution<double> normal(0.0, 30.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> lz(1 + rep % 17);
    for (auto& x : lz) x = normal(rng);
    const auto w = island_weights(lz);
    double s = 0;
    for (double x : w) s += x;
    EXPECT_NEAR(s, 1.0, 1e-12);
    auto moved = lz;
    for (auto& x : moved) x += 500.0;
    const auto w2 = island_weights(moved);
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], w2[i], 1e-12);
  }
}

TEST(Combine, WeightedAndUnweightedExamples) {
  auto ens = ensemble({island({vec({1.0})}, 0.0), island({vec({2.0})}, std::log(3.0))});
  EXPECT_NEAR(combine_weighted(ens, identity_phi)[0], 1.75, 1e-15);
  EXPECT_NEAR(combine_unweighted(ens, identity_phi)[0], 1.5, 1e-15);
  EXPECT_NEAR(ensemble_log_evidence(ens), std::log(2.0), 1e-15);

  const auto square = [](const ParamVector& x) -> Eigen::VectorXd { return x.array().square(); };
  EXPECT_NEAR(combine_weighted(ens, square)[0], 0.25 + 3.0, 1e-15);
}

TEST(Combine, IdenticalIslandsGiveTheirMean) {
  const std::vector<ParamVector> s{vec({0.5, -1.0}), vec({1.5, 3.0})};
  auto ens = ensemble({island(s, -3.0), island(s, 7.0), island(s, 0.0)});
  EXPECT_TRUE(combine_weighted(ens, identity_phi).isApprox(vec({1.0, 1.0}), 1e-14));
  EXPECT_TRUE(combine_unweighted(ens, identity_phi).isApprox(vec({1.0, 1.0}), 1e-14));
  auto single = ensemble({island(s, -50.0)});
  EXPECT_TRUE(combine_weighted(single, identity_phi).isApprox(island_mean(single.results[0], identity_phi)));
}

TEST(Combine, McmcIslandsAreEquallyWeighted) {
  auto ens = ensemble({island({vec({1.0})}, 0.0), island({vec({2.0})}, 5.0)}, IslandMethod::mcmc);
  const auto w = island_weights(ens);
  EXPECT_DOUBLE_EQ(w[0], 0.5);
  EXPECT_DOUBLE_EQ(combine_weighted(ens, identity_phi)[0], 1.5);
}

TEST(IslandMean, HonoursLogWeights) {
  auto r = island({vec({1.0}), vec({2.0})}, 0.0);
  EXPECT_DOUBLE_EQ(island_mean(r, identity_phi)[0], 1.5);
  r.log_weights = {0.0, std::log(3.0)};
  EXPECT_NEAR(island_mean(r, identity_phi)[0], 1.75, 1e-15);
  EXPECT_THROW(island_mean(IslandResult{}, identity_phi), std::invalid_argument);
}

TEST(RunIslands, SingleIslandIsPlainSmc) {
  const auto t = make_gaussian_target(4, 8, 1.0, 3);
  const auto cfg = small_smc();
  const auto ens = run_islands(1, cfg, t, 99);
  const auto direct = run_smc(cfg, t, island_seed(99, 0));
  EXPECT_EQ(ens.results[0].samples, direct.samples);
  EXPECT_EQ(ens.results[0].logz.total(), direct.logz.total());
  EXPECT_EQ(ens.seeds[0], island_seed(99, 0));
}

TEST(RunIslands, IndependentOfParallelism) {
  const auto t = make_gaussian_target(4, 8, 1.0, 3);
  const auto a = run_islands(5, small_smc(), t, 4, 1);
  const auto b = run_islands(5, small_smc(), t, 4, 5);
  for (std::size_t p = 0; p < 5; ++p) {
    EXPECT_EQ(a.results[p].samples, b.results[p].samples);
    EXPECT_EQ(a.results[p].logz.total(), b.results[p].logz.total());
  }
  EXPECT_EQ(a.serial_epochs(), b.serial_epochs());
}

TEST(RunIslands, SixteenIslandsDistinctFiniteEvidence) {
  const auto t = make_gaussian_target(16, 32, 1.0, 7);
  const auto ens = run_islands(16, small_smc(), t, 1, 4);
  std::set<double> seen;
  for (const auto& r : ens.results) {
    EXPECT_TRUE(std::isfinite(r.logz.total()));
    seen.insert(r.logz.total());
  }
  EXPECT_EQ(seen.size(), 16u);
  EXPECT_TRUE(std::isfinite(ensemble_log_evidence(ens)));
  std::uint64_t max_total = 0;
  for (const auto& r : ens.results) max_total = std::max(max_total, r.epochs.total());
  EXPECT_EQ(ens.parallel_epochs(), max_total);
}

TEST(RunIslands, McmcIslands) {
  const auto t = make_gaussian_target(2, 4, 1.0, 1);
  McmcConfig c;
  c.n_samples = 6;
  c.burn_in = 3;
  c.kernel = PcnConfig{};
  const auto ens = run_islands(3, c, t, 2);
  EXPECT_EQ(ens.method, IslandMethod::mcmc);
  for (const auto& r : ens.results) {
    EXPECT_EQ(r.schedule, std::vector<double>{1.0});
    EXPECT_EQ(r.samples.size(), 6u);
    EXPECT_EQ(r.epochs, (EvalTally{6 * 4, 0}));
  }
}

TEST(RunIslands, FailureReportsLowestIsland) {
  auto cfg = small_smc();
  cfg.max_stages = 1;
  try {
    run_islands(3, cfg, make_gaussian_target(2, 50, 0.2, 1), 1, 3);
    FAIL();
  } catch (const IslandError& e) {
    EXPECT_EQ(e.island(), 0u);
    EXPECT_NE(std::string(e.what()).find("island 0"), std::string::npos);
  }
  EXPECT_THROW(run_islands(0, cfg, make_gaussian_target(2, 2, 1.0, 1), 1), std::invalid_argument);
}

TEST(IslandIo, RoundTripIsBitIdentical) {
  const auto t = make_logistic_target(3, 30, 2);
  SmcConfig c;
  c.n_particles = 16;
  c.mutation_steps = 2;
  c.kernel = PcnConfig{};
  const auto r = run_smc(c, t, 5);
  IslandMethod m = IslandMethod::mcmc;
  const auto back = island_from_json(nlohmann::json::parse(island_to_json(r).dump()), &m);
  EXPECT_EQ(m, IslandMethod::smc);
  EXPECT_EQ(back.seed, r.seed);
  EXPECT_EQ(back.samples, r.samples);
  EXPECT_EQ(back.schedule, r.schedule);
  EXPECT_EQ(back.logz.total(), r.logz.total());
  EXPECT_EQ(back.epochs, r.epochs);
}

TEST(IslandIo, MergeFiles) {
  const auto t = make_gaussian_target(2, 4, 1.0, 1);
  const auto ens = run_islands(3, small_smc(), t, 8);
  std::vector<std::string> paths;
  for (std::size_t p = 0; p < 3; ++p) {
    paths.push_back(temp_file("island" + std::to_string(p) + ".json").string());
    write_island_file(paths.back(), ens.results[p]);
  }
  const auto merged = merge_island_files(paths);
  EXPECT_EQ(merged.seeds, ens.seeds);
  EXPECT_EQ(combine_weighted(merged, identity_phi), combine_weighted(ens, identity_phi));
  EXPECT_EQ(ensemble_log_evidence(merged), ensemble_log_evidence(ens));

  write_island_file(paths[2], ens.results[2], IslandMethod::mcmc);
  EXPECT_THROW(merge_island_files(paths), std::invalid_argument);
  {
    std::ofstream bad(paths[1]);
    bad << "{\"seed\": 1,";
  }
  EXPECT_THROW(read_island_file(paths[1]), std::invalid_argument);
  EXPECT_THROW(island_from_json(nlohmann::json::parse("{\"seed\": 1}")), std::invalid_argument);
  for (const auto& p : paths) std::filesystem::remove(p);
}
