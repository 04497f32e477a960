#include <gtest/gtest.h>

#include <cmath>

#include "qfluct/errors.hpp"
#include "qfluct/models.hpp"

using namespace qfluct;

namespace {

double max_entry_diff(const HamiltonianMatrix& a, const HamiltonianMatrix& b) {
  return (a.dense() - b.dense()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Lmg, MatchesLadderOracle) {
  for (int n = 2; n <= 8; ++n)
    for (double a : {0.0, 0.2, 0.5, 0.77, 1.0})
      for (Parity p : {Parity::full, Parity::even, Parity::odd}) {
        const LmgParams lp{n, a, p};
        const auto h = build_lmg_hamiltonian(lp);
        const auto o = fock_oracle(lp);
        ASSERT_EQ(h.basis, o.basis);
        EXPECT_LE(max_entry_diff(h, o), 1e-12) << "N=" << n << " alpha=" << a;
      }
}

TEST(Dicke, MatchesLadderOracle) {
  for (int two_j : {1, 2, 3, 4})
    for (double a : {0.0, 0.3, 1.1})
      for (Parity p : {Parity::full, Parity::even}) {
        DickeParams d;
        d.two_j = two_j;
        d.n_max = 12;
        d.omega = 1.3;
        d.omega0 = 0.7;
        d.alpha = a;
        d.sector = p;
        const auto h = build_dicke_hamiltonian(d);
        ASSERT_LE(h.dimension(), 200);
        const auto o = fock_oracle(d);
        ASSERT_EQ(h.basis, o.basis);
        EXPECT_LE(max_entry_diff(h, o), 1e-12) << "2j=" << two_j << " alpha=" << a;
      }
}

TEST(Lmg, AlphaOneSpectrumIsIntegers) {
  const auto s = diagonalize_shared(LmgParams{40, 1.0, Parity::full});
  ASSERT_EQ(s->dimension(), 41);
  for (int k = 0; k <= 40; ++k) EXPECT_NEAR(s->energies(k), k, 1e-12);
}

TEST(Lmg, ParitySectorsPartitionTheSpectrum) {
  const auto full = diagonalize_shared(LmgParams{31, 0.4, Parity::full});
  const auto even = diagonalize_shared(LmgParams{31, 0.4, Parity::even});
  const auto odd = diagonalize_shared(LmgParams{31, 0.4, Parity::odd});
  ASSERT_EQ(even->dimension() + odd->dimension(), full->dimension());
  std::vector<double> merged(even->energies.data(), even->energies.data() + even->dimension());
  merged.insert(merged.end(), odd->energies.data(), odd->energies.data() + odd->dimension());
  std::sort(merged.begin(), merged.end());
  for (Eigen::Index k = 0; k < full->dimension(); ++k) EXPECT_NEAR(merged[k], full->energies(k), 1e-10);
}

TEST(Dicke, AlphaZeroSpectrumIsFockLadder) {
  DickeParams d;
  d.two_j = 6;
  d.n_max = 20;
  d.omega = 1.0;
  d.omega0 = 0.6;
  d.alpha = 0.0;
  const auto s = diagonalize_shared(d);
  std::vector<double> expect;
  for (int n = 0; n <= d.n_max; ++n)
    for (int two_m = -d.two_j; two_m <= d.two_j; two_m += 2) expect.push_back(d.omega0 * 0.5 * two_m + d.omega * n);
  std::sort(expect.begin(), expect.end());
  ASSERT_EQ(static_cast<std::size_t>(s->dimension()), expect.size());
  for (std::size_t k = 0; k < expect.size(); ++k) EXPECT_NEAR(s->energies(static_cast<Eigen::Index>(k)), expect[k], 1e-12);
}

TEST(Diagonalize, ResidualsAndOrthonormality) {
  DickeParams d;
  d.two_j = 8;
  d.n_max = 30;
  d.alpha = 0.9;
  d.sector = Parity::even;
  const auto s = diagonalize_shared(d);
  EXPECT_LT(s->max_residual, 1e-12);
  const Eigen::MatrixXd g = s->vectors.transpose() * s->vectors;
  EXPECT_LT((g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff(), 1e-12);
  for (Eigen::Index k = 1; k < s->dimension(); ++k) EXPECT_LE(s->energies(k - 1), s->energies(k));
}

TEST(Diagonalize, SignConventionIsDeterministic) {
  const auto a = diagonalize_shared(LmgParams{60, 0.3, Parity::even});
  const auto b = diagonalize_shared(LmgParams{60, 0.3, Parity::even});
  EXPECT_EQ((a->vectors - b->vectors).cwiseAbs().maxCoeff(), 0.0);
  for (Eigen::Index k = 0; k < a->dimension(); ++k) {
    Eigen::Index r;
    a->vectors.col(k).cwiseAbs().maxCoeff(&r);
    EXPECT_GT(a->vectors(r, k), 0.0);
  }
}

TEST(Models, InvalidParametersThrow) {
  EXPECT_THROW(build_lmg_hamiltonian(LmgParams{0, 0.5, Parity::full}), ParameterError);
  DickeParams d;
  d.n_max = -1;
  EXPECT_THROW(build_dicke_hamiltonian(d), ParameterError);
  EXPECT_THROW(parity_from_string("sideways"), ParameterError);
  EXPECT_THROW(observable_matrix("nope", LmgParams{4, 0.5, Parity::full}), ParameterError);
}

TEST(Models, OracleRefusesLargeInstances) {
  EXPECT_THROW(fock_oracle(LmgParams{11, 0.5, Parity::full}), ParameterError);
}

TEST(Dicke, TruncationCheckFlagsSmallCutoff) {
  DickeParams d;
  d.two_j = 10;
  d.n_max = 12;
  d.alpha = 1.5;
  d.sector = Parity::even;
  const auto s = diagonalize_shared(d);
  EXPECT_THROW(require_photon_convergence(*s, s->energies(s->dimension() - 1)), TruncationError);
  d.n_max = 140;
  d.alpha = 0.3;
  const auto t = diagonalize_shared(d);
  EXPECT_NO_THROW(require_photon_convergence(*t, t->energies(0) + 5.0));
}

TEST(Observables, LmgDiagonalObservablesInNtBasis) {
  const LmgParams p{10, 0.5, Parity::full};
  const auto o = observable_matrix("nt_over_N", p);
  const auto basis = model_basis(p);
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    EXPECT_NEAR(o.entries.coeff(i, i), basis[k].n / 10.0, 1e-15);
  }
}
