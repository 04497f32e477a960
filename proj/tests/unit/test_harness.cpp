#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "qfluct/errors.hpp"
#include "qfluct/harness.hpp"

using namespace qfluct;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("qfluct_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_thermal(const fs::path& out) {
  ExperimentConfig c;
  c.model.sizes = {80, 120, 160};
  c.prep.seeds = {1, 2};
  c.diagnostics.points = {{0.5, -0.24, 0.53}, {0.2, -0.6, 0.25}};
  c.output_dir = out;
  return c;
}

}  // namespace

TEST(Fit, ExactPowerLaw) {
  const std::vector<double> xs{10, 20, 40, 80};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(3.0 * std::pow(x, -0.5));
  const auto f = fit_power_law(xs, ys);
  EXPECT_NEAR(f.exponent, 0.5, 1e-12);
  EXPECT_NEAR(f.stderr_, 0.0, 1e-10);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
}

TEST(Fit, ConstantHasZeroExponent) {
  const auto f = fit_power_law(std::vector<double>{1, 2, 3}, std::vector<double>{4, 4, 4});
  EXPECT_EQ(f.exponent, 0.0);
  EXPECT_FALSE(std::signbit(f.exponent));
}

TEST(Fit, RejectsBadInput) {
  EXPECT_THROW(fit_power_law(std::vector<double>{1, 2}, std::vector<double>{1, 2}), ParameterError);
  EXPECT_THROW(fit_power_law(std::vector<double>{1, 2, 3}, std::vector<double>{1, -2, 3}), DomainError);
}

TEST(Config, JsonRoundTripIsLossless) {
  for (const auto& name : recipe_names()) {
    auto c = recipe_config(name);
    c.crook.w_lo = 0.1 + 0.2;  // not a short decimal
    const auto text = config_to_json(c);
    EXPECT_EQ(config_to_json(config_from_json(text)), text) << name;
  }
}

TEST(Config, UnknownKeysAndBadValuesRejected) {
  EXPECT_THROW(config_from_json(R"({"model": {"sizes": [10], "colour": 1}})"), ParameterError);
  EXPECT_THROW(config_from_json(R"({"bogus": true})"), ParameterError);
  EXPECT_THROW(config_from_json(R"({"model": {"sizes": "many"}})"), ParameterError);
  EXPECT_THROW(config_from_json("{not json"), ParameterError);
  EXPECT_THROW(recipe_config("fig9"), ParameterError);
  auto c = recipe_config("fig1");
  c.prep.seeds.clear();
  EXPECT_THROW(c.validate(), ParameterError);
}

TEST(Config, RecipeDefaultsAreOverridable) {
  const auto c = config_from_json(R"({"recipe": "fig2", "model": {"sizes": [100]}})");
  EXPECT_EQ(c.model.sizes, std::vector<int>{100});
  ASSERT_EQ(c.crook.trajectories.size(), 1u);
  EXPECT_EQ(c.crook.trajectories[0], (std::vector<double>{0.2, 0.5}));
}

TEST(Parallel, CapturesExceptionsPerIndex) {
  std::vector<int> hit(6, 0);
  const auto errs = parallel_for(6, 3, [&](std::size_t i) {
    hit[i] = 1;
    if (i == 4) throw NumericalError("boom");
  });
  EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 6);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(static_cast<bool>(errs[i]), i == 4);
}

TEST(FockLattice, SnapsToParitySector) {
  DickeParams p;
  p.two_j = 20;
  p.n_max = 200;
  p.sector = Parity::even;
  EXPECT_DOUBLE_EQ(fock_lattice_energy(p, -1.2), -2.0);
  EXPECT_DOUBLE_EQ(fock_lattice_energy(p, 34.8), 34.0);
  p.two_j = 21;
  p.sector = Parity::even;
  // half-integer j: n + m + j even puts E = n + m on -j + 2Z
  const double e = fock_lattice_energy(p, 3.0);
  EXPECT_NEAR(std::remainder(e + p.j(), 2.0), 0.0, 1e-12);
  EXPECT_LE(std::abs(e - 3.0), 1.0);
}

TEST(Run, EmptySweepHasNoProducts) {
  ExperimentConfig c;
  c.output_dir = scratch("empty");
  const auto m = run_experiment(c);
  EXPECT_TRUE(m.ok());
  EXPECT_TRUE(m.outputs.empty());
  EXPECT_TRUE(fs::exists(c.output_dir / "manifest.json"));
}

TEST(Run, ManifestListsEveryFileWithChecksums) {
  auto c = small_thermal(scratch("manifest"));
  const auto m = run_experiment(c);
  ASSERT_TRUE(m.ok()) << m.failure->message;
  EXPECT_TRUE(verify_manifest(m).empty());
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(c.output_dir)) files += e.path().filename() != "manifest.json";
  EXPECT_EQ(files, m.outputs.size());
  EXPECT_NE(slurp(c.output_dir / "manifest.json").find("thermal_scaling.csv"), std::string::npos);
}

TEST(Run, ByteIdenticalOutputsAcrossRunsAndWorkers) {
  auto a = small_thermal(scratch("det_a"));
  auto b = small_thermal(scratch("det_b"));
  b.workers = 3;
  const auto ma = run_experiment(a), mb = run_experiment(b);
  ASSERT_EQ(ma.outputs.size(), mb.outputs.size());
  for (std::size_t k = 0; k < ma.outputs.size(); ++k) {
    EXPECT_EQ(ma.outputs[k].path, mb.outputs[k].path);
    EXPECT_EQ(ma.outputs[k].sha256, mb.outputs[k].sha256) << ma.outputs[k].path;
  }
}

TEST(Run, NumericalFailureIsRecordedAsPartial) {
  auto c = small_thermal(scratch("partial"));
  c.diagnostics.points.push_back({0.5, 5.0, 0.53});  // above the spectrum
  const auto m = run_experiment(c);
  ASSERT_TRUE(m.failure.has_value());
  EXPECT_EQ(m.failure->kind, "partial");
  EXPECT_NE(slurp(c.output_dir / "thermal_cells.csv").find("unreachable"), std::string::npos);
}

TEST(Run, ConfigErrorsThrow) {
  auto c = small_thermal(scratch("cfg"));
  c.model.name = "ising";
  EXPECT_THROW(run_experiment(c), ParameterError);
}

TEST(Run, CrookProductsAndSchemas) {
  ExperimentConfig c;
  c.model.sizes = {200};
  c.prep.procedures = {"i"};
  c.crook.trajectories = {{0.2, 0.5}};
  c.crook.backward_lo = -0.26;
  c.crook.backward_hi = -0.2;
  c.crook.backward_step = 0.01;
  c.output_dir = scratch("crook");
  const auto m = run_experiment(c);
  ASSERT_TRUE(m.ok()) << m.failure->message;
  const auto ratio = slurp(c.output_dir / "ratio_n200_i_0.2_0.5.csv");
  EXPECT_EQ(ratio.rfind("w,measured_ratio,theory_ratio,included_flag\n", 0), 0u);
  const auto fwd = slurp(c.output_dir / "forward_n200_i_0.2_0.5.csv");
  EXPECT_EQ(fwd.rfind("bin_left,bin_right,probability\n", 0), 0u);
  EXPECT_NE(slurp(c.output_dir / "ratio_n200_i_0.2_0.5.json").find("\"D\""), std::string::npos);
}

TEST(Staircase, SmallLmgAgreesRoughly) {
  ExperimentConfig c;
  const auto s = staircase_check(c, 400, 0.5);
  EXPECT_LT(s.sup_error, 0.05);
  EXPECT_EQ(s.energy.size(), s.classical.size());
  c.model.name = "dicke";
  EXPECT_THROW(staircase_check(c, 10, 0.5), ParameterError);
}
