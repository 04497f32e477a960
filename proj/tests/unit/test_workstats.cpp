#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qfluct/errors.hpp"
#include "qfluct/workstats.hpp"

using namespace qfluct;

namespace {

DickeParams small_dicke(double alpha) {
  DickeParams d;
  d.two_j = 6;
  d.n_max = 60;
  d.alpha = alpha;
  d.sector = Parity::even;
  return d;
}

DiagonalEnsemble eigenstate(const SpectrumPtr& s, Eigen::Index n) {
  return {s, Eigen::VectorXd::Unit(s->dimension(), n)};
}

}  // namespace

TEST(Transitions, Unistochastic) {
  const auto a = diagonalize_shared(LmgParams{120, 0.2, Parity::even});
  const auto b = diagonalize_shared(LmgParams{120, 0.5, Parity::even});
  const auto t = transition_matrix(*a, *b);
  EXPECT_LT((t.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-10);
  EXPECT_LT((t.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-10);
  EXPECT_GE(t.minCoeff(), 0.0);
}

// Mean work of a sudden quench from eigenstate n equals <n|H_B|n> - E_n,
// evaluated here with the sparse Hamiltonian directly.
TEST(Tpm, SuddenQuenchFirstMomentOnRandomCases) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int c = 0; c < 20; ++c) {
    ModelSpec a, b;
    if (c % 2 == 0) {
      const int n = 40 + 20 * (c % 5);
      a = LmgParams{n, u(rng), Parity::even};
      b = LmgParams{n, u(rng), Parity::even};
    } else {
      a = small_dicke(1.5 * u(rng));
      b = small_dicke(1.5 * u(rng));
    }
    SpectrumCache cache(a);
    const double alpha_a = model_alpha(a), alpha_b = model_alpha(b);
    const auto sa = cache.get(alpha_a);
    const Eigen::Index n = static_cast<Eigen::Index>(u(rng) * 0.5 * static_cast<double>(sa->dimension()));
    const Trajectory tr{{alpha_a, alpha_b}};
    const auto lines = tpm_work_spectrum(eigenstate(sa, n), tr, cache);
    const Eigen::VectorXd v = sa->vectors.col(n);
    const double expect = v.dot(build_hamiltonian(b).entries * v) - sa->energies(n);
    EXPECT_NEAR(lines.total(), 1.0, 1e-10) << "case " << c;
    EXPECT_NEAR(lines.mean(), expect, 1e-10 * std::max(1.0, std::abs(expect))) << "case " << c;
  }
}

TEST(Tpm, HistogramsNormalise) {
  SpectrumCache cache(LmgParams{200, 0.2, Parity::even});
  const auto s = cache.get(0.2);
  const Trajectory tr{{0.2, 0.5}};
  const auto init = microcanonical_window_ensemble(s, -0.4 * 200, 10);
  const auto bins = support_bins(init, tr, cache, 0.0, 1.0);
  const auto h = tpm_work_distribution(init, tr, cache, bins);
  double total = 0.0;
  for (double p : h.probability) total += p;
  EXPECT_NEAR(total, 1.0, 1e-10);
  EXPECT_NEAR(h.total, 1.0, 1e-10);
  EXPECT_LT(h.uncovered, 1e-12);
  const auto lines = tpm_work_spectrum(init, tr, cache);
  const auto binned = bin_work(lines, bins);
  for (std::size_t k = 0; k < h.probability.size(); ++k) EXPECT_NEAR(h.probability[k], binned.probability[k], 1e-12);
}

TEST(Tpm, SampledModeMatchesExactWithinNoise) {
  SpectrumCache cache(LmgParams{100, 0.2, Parity::even});
  const auto s = cache.get(0.2);
  const Trajectory tr{{0.2, 0.5}};
  const auto init = microcanonical_window_ensemble(s, -0.4 * 100, 5);
  const auto bins = support_bins(init, tr, cache, 0.0, 2.0);
  const auto ex = tpm_work_distribution(init, tr, cache, bins);
  WorkOptions o;
  o.mode = WorkMode::sampled;
  o.samples = 400'000;
  o.seed = 5;
  const auto sa = tpm_work_distribution(init, tr, cache, bins, o);
  for (std::size_t k = 0; k < ex.probability.size(); ++k) {
    EXPECT_NEAR(sa.probability[k], ex.probability[k], 5.0 * std::sqrt(ex.probability[k] / 4e5) + 1e-6);
  }
  EXPECT_EQ(sa.seed, 5u);
}

TEST(Tpm, DephasedPropagatorIsProductOfLegs) {
  SpectrumCache cache(small_dicke(0.3));
  const Trajectory tr{{0.3, 1.0, 0.6}};
  const auto p = cache.propagator(tr);
  const auto t1 = transition_matrix(*cache.get(0.3), *cache.get(1.0));
  const auto t2 = transition_matrix(*cache.get(1.0), *cache.get(0.6));
  EXPECT_LT((*p - t2 * t1).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(((*p).colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-10);
  // the reversed trajectory of a dephased chain is the transpose
  const auto r = cache.propagator(tr.reversed());
  EXPECT_LT((*r - p->transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

// Each comparison row sits at w_k = E_k - E_f and carries g_f(E_k) / g_i(E_f).
TEST(Crook, ComparisonFollowsTheLadder) {
  SpectrumCache cache(LmgParams{300, 0.2, Parity::even});
  const Trajectory tr{{0.2, 0.5}};
  const double ef = -0.45 * 300, step = 0.01 * 300;
  const auto fwd = microcanonical_window_ensemble(cache.get(0.2), ef, 5);
  const auto ladder = energy_ladder(-0.2 * 300, -0.1 * 300, step);
  const auto fh = tpm_work_distribution(fwd, tr, cache, support_bins(fwd, tr, cache, ladder.front() - ef, step));
  const EnsembleFactory win = [](const SpectrumPtr& s, double e) { return microcanonical_window_ensemble(s, e, 5); };
  const auto back = backward_family(tr, ladder, ef, step, win, cache);
  ASSERT_EQ(back.size(), ladder.size());
  const auto gi = lmg_density_reduced(0.2, {-0.75, 0.05, 160});
  const auto gf = lmg_density_reduced(0.5, {-0.75, 0.05, 160});
  CrookOptions co;
  co.energy_scale = 300;
  co.min_mass = 0.0;
  const auto c = crook_ratio(fh, ef, back, gi, gf, co);
  ASSERT_EQ(c.w.size(), ladder.size());
  for (std::size_t k = 0; k < c.w.size(); ++k) {
    EXPECT_NEAR(c.w[k], ladder[k] - ef, 1e-9);
    EXPECT_NEAR(c.theory[k], gf.at(ladder[k] / 300) / gi.at(ef / 300), 1e-12);
  }
}

TEST(Crook, MisalignedBinsRejected) {
  SpectrumCache cache(LmgParams{100, 0.2, Parity::even});
  const Trajectory tr{{0.2, 0.5}};
  const auto fwd = microcanonical_window_ensemble(cache.get(0.2), -40.0, 3);
  const auto fh = tpm_work_distribution(fwd, tr, cache, support_bins(fwd, tr, cache, 0.37, 1.0));
  const EnsembleFactory win = [](const SpectrumPtr& s, double e) { return microcanonical_window_ensemble(s, e, 3); };
  const std::vector<double> ladder{-10.0, -9.0};
  const auto back = backward_family(tr, ladder, -40.0, 1.0, win, cache);
  const auto g = lmg_density_reduced(0.2, {-0.75, 0.05, 80});
  CrookOptions co;
  co.energy_scale = 100;
  EXPECT_THROW(crook_ratio(fh, -40.0, back, g, g, co), ParameterError);
}

TEST(Bins, UniformAnchoredAndLocate) {
  const auto b = WorkBins::uniform(0.25, 0.5, -1.0, 1.0);
  b.validate();
  for (std::size_t k = 0; k < b.size(); ++k) {
    const double c = (b.center(k) - 0.25) / 0.5;
    EXPECT_NEAR(c, std::round(c), 1e-12);
  }
  ASSERT_TRUE(b.locate(0.25).has_value());
  EXPECT_NEAR(b.center(*b.locate(0.25)), 0.25, 1e-12);
  EXPECT_FALSE(b.locate(50.0).has_value());
  EXPECT_THROW(WorkBins::uniform(0.0, -1.0, 0.0, 1.0), ParameterError);
}

TEST(Distance, MeanRelativeDeviation) {
  const std::vector<double> h{1.1, 2.0, 2.7}, ref{1.0, 2.0, 3.0};
  EXPECT_NEAR(histogram_distance(h, ref), (0.1 + 0.0 + 0.1) / 3.0, 1e-15);
  EXPECT_NEAR(histogram_distance(h, ref, {true, false, false}), 0.1, 1e-15);
  const std::vector<double> zero{1.0, 0.0, 1.0};
  EXPECT_THROW(histogram_distance(h, zero), DomainError);
}

TEST(Ladder, InclusiveEndpoints) {
  const auto l = energy_ladder(-0.26, -0.14, 0.005);
  ASSERT_EQ(l.size(), 25u);
  EXPECT_NEAR(l.back(), -0.14, 1e-12);
}
