#include <gtest/gtest.h>

#include <cmath>

#include "qfluct/equilibration.hpp"
#include "qfluct/errors.hpp"

using namespace qfluct;

namespace {

SpectrumPtr lmg(int n, double a) { return diagonalize_shared(LmgParams{n, a, Parity::even}); }

}  // namespace

TEST(Quench, OverlapIsOrthogonal) {
  const Quench q(lmg(80, 0.2), lmg(80, 0.5));
  const Eigen::MatrixXd g = q.overlap().transpose() * q.overlap();
  EXPECT_LT((g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ProcedureI, HitsTargetEnergy) {
  const auto target = lmg(300, 0.5);
  const auto s = prepare_procedure_i(target, -0.24 * 300);
  const auto m = energy_moments(diagonal_ensemble(s), *target);
  EXPECT_NEAR(m.mean, -0.24 * 300, 1e-6 * 300);
  EXPECT_LT(s.norm_error(), 1e-12);
  EXPECT_EQ(s.provenance.procedure, "i");
}

TEST(ProcedureI, UnreachableTargetThrows) {
  const auto target = lmg(100, 0.5);
  EXPECT_THROW(prepare_procedure_i(target, 10.0 * 100), NumericalError);
}

TEST(ProcedureII, ReproducibleAndOnTarget) {
  const auto target = lmg(300, 0.5), inter = lmg(300, 0.53);
  ProcedureIIOptions o;
  o.start_offset = 0.02 * 300;
  o.seed = 11;
  const auto a = prepare_procedure_ii(inter, target, -0.24 * 300, o);
  const auto b = prepare_procedure_ii(inter, target, -0.24 * 300, o);
  EXPECT_EQ((a.coeffs - b.coeffs).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NEAR(energy_moments(diagonal_ensemble(a), *target).mean, -0.24 * 300, 1e-6 * 300);
  EXPECT_GT(a.provenance.cycles, 0);
  ASSERT_TRUE(a.provenance.seed.has_value());
  EXPECT_EQ(*a.provenance.seed, 11u);
}

TEST(ProcedureII, WiderThanProcedureI) {
  const auto target = lmg(400, 0.5), inter = lmg(400, 0.53);
  ProcedureIIOptions o;
  o.start_offset = 0.02 * 400;
  const auto d2 = diagonal_ensemble(prepare_procedure_ii(inter, target, -0.24 * 400, o));
  const auto d1 = diagonal_ensemble(prepare_procedure_i(target, -0.24 * 400));
  EXPECT_GT(energy_moments(d2, *target).delta_e2, 5.0 * energy_moments(d1, *target).delta_e2);
}

TEST(Ensembles, WindowIsUniformAndRejectsClipping) {
  const auto s = lmg(200, 0.5);
  const auto w = microcanonical_window_ensemble(s, s->energies(s->dimension() / 2), 5);
  EXPECT_NEAR(effective_dimension(w), 11.0, 1e-12);
  EXPECT_NEAR(w.populations.sum(), 1.0, 1e-15);
  EXPECT_THROW(microcanonical_window_ensemble(s, s->energies(1), 5), NumericalError);
}

TEST(Ensembles, EffectiveDimensionOfEigenstateIsOne) {
  const auto s = lmg(50, 0.5);
  QuantumState st{s, Eigen::VectorXcd::Unit(s->dimension(), 7), {}};
  EXPECT_DOUBLE_EQ(effective_dimension(diagonal_ensemble(st)), 1.0);
}

TEST(Fluctuations, ExactAndSampledAgree) {
  const auto target = lmg(200, 0.5);
  const auto st = prepare_procedure_i(target, -0.24 * 200);
  const auto obs = observable_matrix("nt_over_N", target->model);
  const auto ex = fluctuation_variance(st, obs, VarianceMode::exact);
  const auto sa = fluctuation_variance(st, obs, VarianceMode::sampled, 2e4, 40'000);
  EXPECT_GT(ex.variance, 0.0);
  EXPECT_NEAR(sa.variance, ex.variance, 0.1 * ex.variance);
}

TEST(Fluctuations, LongTimeAverageIsTimeSeriesMean) {
  const auto target = lmg(120, 0.5);
  const auto st = prepare_procedure_i(target, -0.2 * 120);
  const auto obs = observable_matrix("QQ_over_N2", target->model);
  const auto ts = evolve_expectation(st, obs, uniform_times(5e4, 50'000));
  double mean = 0.0;
  for (double v : ts.values) mean += v / static_cast<double>(ts.values.size());
  EXPECT_NEAR(mean, long_time_average(st, obs), 2e-3);
}

TEST(Fock, SelectionLandsNearTarget) {
  DickeParams d;
  d.two_j = 8;
  d.n_max = 112;
  d.alpha = 0.6;
  d.sector = Parity::even;
  const auto s = diagonalize_shared(d);
  const std::vector<std::string> obs{"Jz", "adaga"};
  const auto f = select_fock_state(s, 12.0, obs, 10, 0.5);
  EXPECT_NEAR(f.best.energy, 12.0, 0.5);
  EXPECT_FALSE(f.candidates.empty());
  EXPECT_THROW(select_fock_state(s, 12.5, obs, 10, 0.1), NumericalError);
}
