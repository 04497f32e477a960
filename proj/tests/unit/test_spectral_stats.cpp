#include <gtest/gtest.h>

#include "qfluct/errors.hpp"
#include "qfluct/spectral_stats.hpp"

using namespace qfluct;

TEST(RStat, HandComputedRatios) {
  // spacings 1, 2, 1, 3 -> ratios 1/2, 1/2, 1/3
  const std::vector<double> lv{0.0, 1.0, 3.0, 4.0, 7.0};
  const auto r = r_statistic_range(lv, 0.0, 7.0);
  EXPECT_EQ(r.pairs, 3u);
  EXPECT_NEAR(r.mean, (0.5 + 0.5 + 1.0 / 3.0) / 3.0, 1e-15);
}

TEST(RStat, DegenerateGapsAreExcluded) {
  const std::vector<double> lv{0.0, 1.0, 1.0, 2.5, 3.0, 5.0};
  const auto r = r_statistic_range(lv, 0.0, 5.0);
  EXPECT_GT(r.excluded, 0u);
  EXPECT_EQ(r.pairs + r.excluded, 4u);
}

TEST(RStat, PoissonAndGoeReferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto p = poisson_spectrum(20000, seed);
    const auto rp = r_statistic_range(p, p.front(), p.back());
    EXPECT_NEAR(rp.mean, kPoissonMeanR, 3.0 * rp.stderr_);
    const auto g = goe_spectrum(1600, seed);
    const auto rg = r_statistic_range(g, g[400], g[1200]);
    EXPECT_NEAR(rg.mean, kGoeMeanR, 3.0 * rg.stderr_);
  }
}

TEST(RStat, SyntheticSpectraAreDeterministic) {
  EXPECT_EQ(poisson_spectrum(100, 9), poisson_spectrum(100, 9));
  EXPECT_EQ(goe_spectrum(50, 9), goe_spectrum(50, 9));
  EXPECT_NE(goe_spectrum(50, 9), goe_spectrum(50, 10));
}

TEST(RStat, WindowErrors) {
  const std::vector<double> lv{0.0, 1.0, 2.5, 4.0, 4.5, 6.0};
  EXPECT_THROW(r_statistic(lv, 0.0, 5), NumericalError);
  EXPECT_THROW(r_statistic(lv, 2.0, 2), ParameterError);
  const std::vector<double> bad{0.0, 2.0, 1.0, 3.0};
  EXPECT_THROW(r_statistic_range(bad, 0.0, 3.0), ParameterError);
}
