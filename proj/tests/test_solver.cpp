#include <gtest/gtest.h>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "support.hpp"

using namespace nbsopt;

namespace {

std::filesystem::path write_script(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << "#!/bin/sh\n" << body;
  std::filesystem::permissions(path, std::filesystem::perms::owner_all);
  return path;
}

// reference encoder: 16-bit groups high to low, 6-bit digits low to high
std::string encode_exact(double v) {
  static const char* digits = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ*+";
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::string out;
  for (int k = 3; k >= 0; --k) {
    unsigned group = static_cast<unsigned>(bits >> (16 * k)) & 0xffffu;
    for (int n = 0; n < 3; ++n, group >>= 6) out += digits[group & 63u];
  }
  return out;
}

}  // namespace

TEST(Oracle, NoFreeUnitsReturnsDoNothing) {
  Instance inst = test::make_instance(3, 3, {"GW"}, {"TempMax"});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != 1 || j != 1) inst.masks.forbidden[0].push_back({i, j});
  inst.masks.pre_existing[0].push_back({1, 1});
  validate(inst);
  EXPECT_EQ(decision_units(inst).count(), 0u);
  const SolveResult r = solve_oracle(inst);
  EXPECT_EQ(r.status, SolveStatus::Optimal);
  EXPECT_EQ(r.placement, pre_existing_placement(inst));
}

TEST(Oracle, TwoFreeCellsOneType) {
  Instance inst = test::make_instance(2, 2, {"UP"}, {"TempMax"});
  inst.masks.forbidden[0] = {{0, 0}, {1, 1}};
  inst.budget = 1.5 * inst.nbs[0].cell_cost(inst.dims);  // only one of the two fits
  validate(inst);
  ASSERT_EQ(decision_units(inst).count(), 2u);
  double best = std::numeric_limits<double>::infinity();
  int feasible = 0;
  for (int mask = 0; mask < 4; ++mask) {
    Placement p = Placement::empty(inst.dims, 1);
    p.x[0](0, 1) = mask & 1;
    p.x[0](1, 0) = (mask >> 1) & 1;
    if (!check_placement(inst, p).empty()) continue;
    ++feasible;
    best = std::min(best, evaluate_solution(inst, p).total);
  }
  EXPECT_EQ(feasible, 3);
  EXPECT_EQ(solve_oracle(inst).objective, best);
}

TEST(Oracle, CapExceeded) {
  const Instance inst = test::make_instance(5, 5, {"GW", "GR"}, {"TempMax"});
  try {
    solve_oracle(inst, 16);
    FAIL() << "expected solver.cap";
  } catch (const SolveError& e) {
    EXPECT_EQ(e.code(), "solver.cap");
  }
}

TEST(OracleProperty, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    SyntheticOptions opt;
    opt.dims = {3, 2 + static_cast<int>(seed % 2), 10.0};
    opt.nbs_count = 1 + static_cast<int>(seed % 2);
    opt.measure_count = 1 + static_cast<int>(seed % 2);
    opt.forbidden_fraction = 0.2;
    opt.pre_existing_fraction = 0.15;
    Instance inst = generate_synthetic(seed, opt);
    if (seed % 3 == 0) {
      std::vector<std::string> ids;
      for (const NbsType& n : inst.nbs) ids.push_back(n.id);
      inst.clusters = build_partition(inst, ids, {2, 4});
      validate(inst);
    }
    const SolveResult r = solve_oracle(inst, 30);
    EXPECT_NEAR(r.objective, test::brute_force_optimum(inst), 1e-12) << "seed " << seed;
    EXPECT_TRUE(check_placement(inst, r.placement).empty());
  }
}

TEST(OracleProperty, DeterministicAndNoWorseThanDoNothing) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Instance inst = test::small_synthetic(seed, 5, 2, 2, 12);
    const SolveResult a = solve_oracle(inst);
    const SolveResult b = solve_oracle(inst);
    EXPECT_EQ(a.placement, b.placement);
    EXPECT_EQ(a.objective, b.objective);
    EXPECT_LE(a.objective, evaluate_solution(inst, pre_existing_placement(inst)).total + 1e-9);
  }
}

TEST(Oracle, PlacementSatisfiesBigMRowsForSomeY) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Instance inst = test::small_synthetic(seed, 5, 2, 2, 10);
    const SolveResult r = solve_oracle(inst);
    const MilpModel m = build_model(inst);
    const auto v = model_point(inst, m, r.placement);
    EXPECT_TRUE(check_model_point(m, v, 1e-9).empty());
    EXPECT_NEAR(model_objective(m, v), r.objective, 1e-9);
  }
}

TEST(Units, RestrictHonoursCap) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticOptions opt;
    opt.dims = {10, 10, 10.0};
    Instance inst = generate_synthetic(seed, opt);
    restrict_decision_units(inst, 16, seed);
    EXPECT_LE(decision_units(inst).count(), 16u);
    Instance again = generate_synthetic(seed, opt);
    restrict_decision_units(again, 16, seed);
    EXPECT_EQ(again, inst);
  }
}

TEST(ParseSolution, Formats) {
  const std::unordered_map<std::string, std::size_t> cols{{"a", 0}, {"b", 1}, {"c", 2}};
  const std::string cbc =
      "Optimal - objective value 1.25\n"
      "      0 a                      1                       0\n"
      "**    2 c                    0.5                     0.1\n";
  ParsedSolution s = parse_solution(cbc, cols, 3);
  EXPECT_EQ(s.status_line, "Optimal - objective value 1.25");
  ASSERT_TRUE(s.objective);
  EXPECT_EQ(*s.objective, 1.25);
  EXPECT_EQ(s.values, (std::vector<double>{1.0, 0.0, 0.5}));

  s = parse_solution("a 1\nb 2.5e-1\nzz 4\n", cols, 3);
  EXPECT_EQ(s.values, (std::vector<double>{1.0, 0.25, 0.0}));
  ASSERT_EQ(s.unknown.size(), 1u);
  EXPECT_EQ(s.unknown[0], "zz");
  EXPECT_TRUE(s.status_line.empty());

  EXPECT_THROW(parse_solution("a 1\nthis is not a value line\n", cols, 3), SolveError);
}

TEST(ExactValues, DecodesCapturedSolverOutput) {
  // tokens captured from a CBC run whose plain file printed 35.522234 and 29.560515
  EXPECT_EQ(decode_exact_double("114obcH59c0a"), 35.522234132338866);
  EXPECT_EQ(decode_exact_double("Z04ZZ83De2e6"), 29.560515032007523);
  EXPECT_EQ(decode_exact_double("000000000000"), 0.0);
  EXPECT_FALSE(decode_exact_double("12345"));
  EXPECT_FALSE(decode_exact_double("00000000000!"));
  EXPECT_FALSE(decode_exact_double("+++000000000"));  // group exceeds 16 bits
}

TEST(ExactValuesProperty, RoundTripsRandomDoubles) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> mag(-300.0, 300.0);
  for (int k = 0; k < 2000; ++k) {
    const double v = (k % 2 ? -1.0 : 1.0) * std::pow(10.0, mag(rng) / 10.0);
    const auto d = decode_exact_double(encode_exact(v));
    ASSERT_TRUE(d);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(*d), std::bit_cast<std::uint64_t>(v));
  }
  EXPECT_EQ(decode_exact_double(encode_exact(1.0)), 1.0);
  EXPECT_EQ(decode_exact_double(encode_exact(-0.25)), -0.25);
}

TEST(ExactValues, OverlayReplacesKnownColumns) {
  const std::unordered_map<std::string, std::size_t> cols{{"a", 0}, {"b", 1}, {"c", 2}};
  std::vector<double> v{1.0, 2.0, 3.0};
  const std::string text = " FX BOUND001  a  " + encode_exact(0.1) + "\n FX BOUND001  zz  " + encode_exact(5.0) +
                           "\n FX BOUND001  c  4.5\n";
  EXPECT_EQ(overlay_exact_values(text, cols, v), 2u);
  EXPECT_EQ(v, (std::vector<double>{0.1, 2.0, 4.5}));
  EXPECT_THROW(overlay_exact_values(" FX BOUND001  b  nonsense\n", cols, v), SolveError);
}

TEST(SolveConfig, Validation) {
  const Instance inst = test::make_instance(2, 2, {"GW"}, {"TempMax"});
  SolveConfig cfg = test::external_config();
  cfg.time_limit = 0.0;
  EXPECT_THROW(solve(inst, cfg), SolveError);
  cfg.time_limit = 10.0;
  cfg.gap = -1.0;
  EXPECT_THROW(solve(inst, cfg), SolveError);
}

TEST(External, MissingSolverIsAnError) {
  const Instance inst = test::make_instance(2, 2, {"GW"}, {"TempMax"});
  SolveConfig cfg;
  cfg.backend = Backend::External;
  cfg.command = "/nonexistent/solver {model} {solution}";
  try {
    solve(inst, cfg);
    FAIL() << "expected solver.external";
  } catch (const SolveError& e) {
    EXPECT_EQ(e.code(), "solver.external");
  }
}

TEST(External, InfeasibleStatusPropagates) {
  // a cluster holding a pre-existing cell must be completed, which costs more than the budget
  Instance inst = test::make_instance(2, 2, {"GW"}, {"TempMax"});
  inst.masks.pre_existing[0].push_back({0, 0});
  inst.clusters = ClusterPartition{{{{{0, 0}, {0, 1}}}}, {}};
  inst.budget = 0.0;
  validate(inst);
  ASSERT_FALSE(check_placement(inst, pre_existing_placement(inst)).empty());
  const auto script = write_script("nbsopt_fake_infeasible.sh", "echo 'Infeasible - objective value 0' > \"$2\"\n");
  SolveConfig cfg;
  cfg.backend = Backend::External;
  cfg.command = script.string() + " {model} {solution}";
  EXPECT_EQ(solve(inst, cfg).status, SolveStatus::Infeasible);
}

TEST(External, SpuriousInfeasibleFallsBack) {
  const Instance inst = test::make_instance(2, 2, {"GW"}, {"TempMax"});
  const auto script = write_script("nbsopt_fake_spurious.sh", "echo 'Integer infeasible - objective value 0.4' > \"$2\"\n");
  SolveConfig cfg;
  cfg.backend = Backend::External;
  cfg.command = script.string() + " {model} {solution}";
  const SolveResult r = solve(inst, cfg);
  EXPECT_EQ(r.status, SolveStatus::FeasibleTimeout);
  EXPECT_EQ(r.placement, pre_existing_placement(inst));
}

TEST(External, PlainNameValueSolution) {
  // a solver that writes the do-nothing point in "name value" form
  Instance inst = test::make_instance(2, 2, {"GW"}, {"TempMax"});
  const MilpModel m = build_model(inst);
  const auto v = model_point(inst, m, pre_existing_placement(inst));
  std::string body = "cat > \"$2\" <<'END'\nOptimal - objective value 0\n";
  for (std::size_t k = 0; k < v.size(); ++k)
    if (v[k] != 0.0) body += m.var_name(k) + " " + format_number(v[k]) + "\n";
  body += "END\n";
  const auto script = write_script("nbsopt_fake_plain.sh", body);
  SolveConfig cfg;
  cfg.backend = Backend::External;
  cfg.command = script.string() + " {model} {solution}";
  const SolveResult r = solve(inst, cfg);
  EXPECT_EQ(r.status, SolveStatus::Optimal);
  EXPECT_EQ(r.placement, pre_existing_placement(inst));
}

TEST(External, ObjectiveMismatchIsAnError) {
  Instance inst = test::make_instance(2, 2, {"GW"}, {"TempMax"});
  const MilpModel m = build_model(inst);
  auto v = model_point(inst, m, pre_existing_placement(inst));
  v[m.layout.zmax(0)] += 1.0;  // inconsistent with the placement
  std::string body = "cat > \"$2\" <<'END'\nOptimal - objective value 0\n";
  for (std::size_t k = 0; k < v.size(); ++k)
    if (v[k] != 0.0) body += m.var_name(k) + " " + format_number(v[k]) + "\n";
  body += "END\n";
  const auto script = write_script("nbsopt_fake_mismatch.sh", body);
  SolveConfig cfg;
  cfg.backend = Backend::External;
  cfg.command = script.string() + " {model} {solution}";
  try {
    solve(inst, cfg);
    FAIL() << "expected solver.mismatch";
  } catch (const SolveError& e) {
    EXPECT_EQ(e.code(), "solver.mismatch");
  }
}

TEST(External, KilledSolverFallsBackToDoNothing) {
  Instance inst = test::make_instance(2, 2, {"GW"}, {"TempMax"});
  const auto script = write_script("nbsopt_fake_sleep.sh", "sleep 60\n");
  SolveConfig cfg;
  cfg.backend = Backend::External;
  cfg.time_limit = 0.2;
  cfg.command = script.string() + " {model} {solution}";
  const SolveResult r = solve(inst, cfg);
  EXPECT_EQ(r.status, SolveStatus::FeasibleTimeout);
  EXPECT_EQ(r.placement, pre_existing_placement(inst));
  EXPECT_LT(r.wall_time, 30.0);
}

TEST(External, EnvironmentCommandFallback) {
  SolveConfig cfg;
  setenv(kSolverCommandEnv, "from-env {model}", 1);
  EXPECT_EQ(resolve_solver_command(cfg), "from-env {model}");
  cfg.command = "from-flag";
  EXPECT_EQ(resolve_solver_command(cfg), "from-flag");
  unsetenv(kSolverCommandEnv);
  cfg.command.clear();
  EXPECT_EQ(resolve_solver_command(cfg), kDefaultSolverCommand);
}

class Cbc : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!test::have_cbc()) GTEST_SKIP() << "CBC not found at configure time";
  }
};

TEST_F(Cbc, MatchesOracleOnThreeByThree) {
  Instance inst = test::make_instance(3, 3, {"GW", "ST"}, {"TempMax", "PM10"});
  inst.masks.forbidden[0] = {{0, 0}, {0, 1}, {0, 2}};
  validate(inst);
  ASSERT_LE(decision_units(inst).count(), 16u);
  const SolveResult o = solve_oracle(inst);
  const SolveResult e = solve(inst, test::external_config());
  EXPECT_EQ(e.status, SolveStatus::Optimal);
  EXPECT_NEAR(e.objective, o.objective, 1e-6 * std::max(1.0, std::abs(o.objective)));
  EXPECT_TRUE(check_placement(inst, e.placement).empty());
}

TEST_F(Cbc, AllForbiddenZeroBudget) {
  Instance inst = test::make_instance(3, 3, {"GW", "UP"}, {"TempMax"});
  for (std::size_t t = 0; t < 2; ++t)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) inst.masks.forbidden[t].push_back({i, j});
  inst.budget = 0.0;
  validate(inst);
  const SolveResult r = solve(inst, test::external_config());
  EXPECT_EQ(r.status, SolveStatus::Optimal);
  EXPECT_EQ(r.placement, pre_existing_placement(inst));
  EXPECT_NEAR(r.objective, test::brute_force_optimum(inst), 1e-9);
}

TEST_F(Cbc, WithClusters) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    SyntheticOptions opt;
    opt.dims = {5, 5, 10.0};
    opt.nbs_count = 2;
    opt.measure_count = 1;
    opt.forbidden_fraction = 0.5;
    Instance inst = generate_synthetic(seed + 100, opt);
    restrict_decision_units(inst, 14, seed);
    std::vector<std::string> ids;
    for (const NbsType& n : inst.nbs) ids.push_back(n.id);
    inst.clusters = build_partition(inst, ids, {2, 5});
    validate(inst);
    const SolveResult o = solve_oracle(inst, 20);
    const SolveResult e = solve(inst, test::external_config());
    EXPECT_NEAR(e.objective, o.objective, 1e-6 * std::max(1.0, std::abs(o.objective))) << seed;
    EXPECT_TRUE(check_placement(inst, e.placement).empty());
  }
}

TEST_F(Cbc, ShortTimeLimitOnLargeGridNeverErrors) {
  SyntheticOptions opt;
  opt.dims = {100, 100, 10.0};
  opt.nbs_count = 2;
  opt.measure_count = 1;
  const Instance inst = generate_synthetic(7, opt);
  SolveConfig cfg = test::external_config(1.0);
  const SolveResult r = solve(inst, cfg);
  EXPECT_TRUE(r.status == SolveStatus::Optimal || r.status == SolveStatus::FeasibleTimeout)
      << to_string(r.status) << ": " << r.message;
  EXPECT_TRUE(check_placement(inst, r.placement).empty());
}
