#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "qfluct/errors.hpp"
#include "qfluct/semiclassics.hpp"

using namespace qfluct;

namespace {

constexpr double kPi = std::numbers::pi;

// H/N on the (q, p) cell, written out from Q.Q/N^2 = 4p(1-p)cos^2 q.
double lmg_h(double q, double p, double a) {
  const double c = std::cos(q);
  return a * p - 4.0 * (1.0 - a) * p * (1.0 - p) * c * c;
}

// Fraction of a midpoint grid on [0, 2pi) x [0, 1] with H < E, and the
// grid average of p over the shell |H - E| < w/2.
struct GridCount {
  double below = 0.0;
  double shell_p = 0.0;
};

GridCount lmg_grid(double a, double e, double w, int n) {
  long below = 0, shell = 0;
  double sum_p = 0.0;
  for (int i = 0; i < n; ++i) {
    const double q = (i + 0.5) * 2.0 * kPi / n;
    for (int k = 0; k < n; ++k) {
      const double p = (k + 0.5) / n;
      const double h = lmg_h(q, p, a);
      if (h < e) ++below;
      if (std::abs(h - e) < 0.5 * w) {
        ++shell;
        sum_p += p;
      }
    }
  }
  return {static_cast<double>(below) / (static_cast<double>(n) * n), shell ? sum_p / shell : 0.0};
}

}  // namespace

TEST(Classical, LmgEnergyMatchesExplicitForm) {
  for (double q : {0.1, 1.3, 2.9, 5.0})
    for (double p : {0.0, 0.25, 0.8, 1.0}) EXPECT_NEAR(classical_lmg_energy(q, p, 0.35), lmg_h(q, p, 0.35), 1e-15);
  EXPECT_THROW(classical_lmg_energy(0.3, 1.2, 0.5), DomainError);
}

TEST(Classical, LmgPhaseIntegralAgreesWithGridCount) {
  for (double a : {0.2, 0.5})
    for (double e : {-0.6, -0.3, -0.24, 0.0, 0.15}) {
      const auto g = lmg_grid(a, e, 0.0, 2000);
      EXPECT_NEAR(lmg_phase_integral(a, e, LmgClassicalForm::qq_consistent, nullptr), g.below, 2e-3)
          << "alpha=" << a << " E=" << e;
    }
}

TEST(Classical, LmgShellAverageAgreesWithGrid) {
  const auto obs = lmg_classical_observable("nt_over_N");
  const auto g = lmg_grid(0.5, -0.24, 0.02, 3000);
  EXPECT_NEAR(lmg_shell_average_reduced(0.5, obs, -0.24, 0.02), g.shell_p, 2e-3);
}

TEST(Classical, LmgDensityIntegratesToOne) {
  const auto d = lmg_density_reduced(0.5, {-1.2, 0.6, 900});
  double total = 0.0;
  for (double v : d.density) total += v * d.bin_width;
  EXPECT_NEAR(total, 1.0, 1e-8);
}

TEST(Classical, DickeVolumeAtZeroCouplingIsAnalytic) {
  DickeParams p;
  p.two_j = 20;
  p.omega = 1.0;
  p.omega0 = 0.8;
  p.alpha = 0.0;
  const double j = p.j();
  for (double e : {-5.0, 0.0, 3.0, 12.0}) {
    // (1/w) * integral over jz of (E - w0 jz)_+
    const double top = std::min(j, e / p.omega0);
    const double exact = top > -j ? (e * (top + j) - 0.5 * p.omega0 * (top * top - j * j)) / p.omega : 0.0;
    EXPECT_NEAR(dicke_phase_volume(p, e, DickeCoupling::field), exact, 1e-6 * std::max(1.0, exact)) << "E=" << e;
  }
}

TEST(Classical, DickeReducedDensityAgreesWithMonteCarlo) {
  DickeParams p;
  p.two_j = 20;
  p.alpha = 0.6;
  const EnergyGrid grid{-5.0, 30.0, 14};
  const auto reduced = dicke_density_reduced(p, grid);
  QuadratureSpec spec;
  spec.samples = 4'000'000;
  spec.seed = 7;
  const auto mc = density_of_states(dicke_classical(p, dicke_disk_radius(p, grid.hi)), grid, spec);
  for (std::size_t k = 0; k < grid.bins; ++k) {
    EXPECT_NEAR(mc.density[k], reduced.density[k], 4.0 * mc.stderr_[k] + 1e-3 * reduced.density[k]) << "bin " << k;
  }
}

TEST(Curves, ExtensiveRescaling) {
  DosCurve d;
  d.energy = {-0.5, -0.4, -0.3};
  d.density = {1.0, 2.0, 4.0};
  const auto c = extensive_curve(d, 100.0);
  EXPECT_DOUBLE_EQ(c.x[1], -40.0);
  EXPECT_DOUBLE_EQ(c.y[2], 0.04);
  EXPECT_NEAR(c.at(-35.0), 0.03, 1e-15);
  EXPECT_TRUE(std::isnan(c.at(-60.0)));
}

TEST(Curves, QuadraticSmoothingIsExactOnParabolas) {
  std::vector<double> xs, ys, grid;
  for (int k = 0; k <= 200; ++k) {
    xs.push_back(-1.0 + 0.01 * k);
    ys.push_back(3.0 - 2.0 * xs.back() + 0.5 * xs.back() * xs.back());
  }
  for (int k = 0; k < 11; ++k) grid.push_back(-0.5 + 0.1 * k);
  const auto c = local_quadratic_smooth(xs, ys, grid, 0.3);
  for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_NEAR(c.y[k], 3.0 - 2.0 * grid[k] + 0.5 * grid[k] * grid[k], 1e-10);
  EXPECT_THROW(local_quadratic_smooth(xs, ys, grid, 0.0), ParameterError);
}

TEST(Conditions, CrookConditionOnExponentials) {
  const double a = 0.7, b = -0.3, de2 = 2.0;
  Curve g, p;
  for (int k = -50; k <= 50; ++k) {
    const double e = 0.01 * k;
    g.x.push_back(e);
    g.y.push_back(std::exp(a * e));
    p.x.push_back(e);
    p.y.push_back(std::exp(b * e));
  }
  const auto c = evaluate_crook_condition(g, p, de2, 0.0);
  EXPECT_NEAR(c.value, (a * a + b * b + a * b) * de2, 1e-4);
}

TEST(Conditions, SrednickiConditionOnQuadratic) {
  Curve o;
  for (int k = -20; k <= 20; ++k) {
    o.x.push_back(0.05 * k);
    o.y.push_back(2.0 + o.x.back() * o.x.back());
  }
  const auto s = evaluate_srednicki_condition(o, 0.5, 0.0);
  EXPECT_NEAR(s.value, 0.5 * 2.0 / 2.0, 1e-10);
}
