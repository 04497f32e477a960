#pragma once

// Classical limits of the collective models, Monte Carlo densities of states
// and shell averages, and the smoothness conditions built on them.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qfluct/models.hpp"

namespace qfluct {

/// `negative_sin2` carries -4(1-a)p(1-p)sin^2 q. Expanding
/// Q.Q/N^2 = 4p(1-p)cos^2 q instead gives +4(1-a)p(1-p)sin^2 q, whose
/// spectrum edges agree with the quantum model.
enum class LmgClassicalForm { negative_sin2, qq_consistent };

/// `angle_only` couples cos(phi) with no field coordinate; the field-coupled
/// form multiplies the coupling by q.
enum class DickeCoupling { angle_only, field };

double classical_lmg_energy(double q, double p, double alpha, LmgClassicalForm form = LmgClassicalForm::qq_consistent);
double classical_dicke_energy(double jz, double phi, double q, double p, const DickeParams& params,
                              DickeCoupling coupling = DickeCoupling::field);

/// Phase-space function of the canonical coordinates.
using PhaseFunction = std::function<double(std::span<const double>)>;

/// Classical limits (x = {q, p}) of the LMG observables nt_over_N,
/// nt2_over_N2, ntns_over_N2 and QQ_over_N2.
PhaseFunction lmg_classical_observable(std::string_view name);

struct ClassicalModel {
  std::string tag;
  std::vector<std::string> coordinates;
  double alpha = 0.0;
  /// Measure of the sampled domain in the canonical coordinates.
  double volume = 0.0;
  /// Multiplies shell measure to give g(E): 1/volume for LMG (unit
  /// normalisation), (2 pi)^-2 for Dicke (states per energy).
  double density_factor = 1.0;
  double disk_radius = 0.0;  ///< Dicke (q, p) truncation radius, 0 if unused
  std::string measure;
  PhaseFunction energy;
  /// Maps a point of the unit cube to a uniformly distributed domain point.
  std::function<void(std::span<const double>, std::span<double>)> from_unit;
};

/// LMG on p in [0, 1], q in [0, 2 pi), measure dq dp.
ClassicalModel lmg_classical(double alpha, LmgClassicalForm form = LmgClassicalForm::qq_consistent);
/// Dicke on jz in [-j, j], phi in [0, 2 pi), (q, p) in a disk of the given radius.
ClassicalModel dicke_classical(const DickeParams& params, double disk_radius,
                               DickeCoupling coupling = DickeCoupling::field);
/// Smallest radius that keeps every shell with energy <= max_energy strictly
/// inside the disk (plus the requested margin).
double dicke_disk_radius(const DickeParams& params, double max_energy, double margin = 1.0);

struct EnergyGrid {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t bins = 100;

  double width() const { return (hi - lo) / static_cast<double>(bins); }
  double center(std::size_t k) const { return lo + (static_cast<double>(k) + 0.5) * width(); }
  void validate() const;
};

struct QuadratureSpec {
  std::uint64_t samples = 10'000'000;
  std::uint64_t seed = 1;
  unsigned partitions = 8;
  double bandwidth = 0.0;  ///< Gaussian kernel width; 0 selects exact-weight binning
  double max_relative_stderr = 0.05;
};

struct DosCurve {
  std::string model;
  double alpha = 0.0;
  std::vector<double> energy;  ///< bin centres
  std::vector<double> density;
  std::vector<double> stderr_;
  double bin_width = 0.0;
  double bandwidth = 0.0;
  double disk_radius = 0.0;
  double captured_fraction = 0.0;  ///< share of samples inside the grid
  std::uint64_t samples = 0;
  std::uint64_t seed = 0;
  bool stderr_warning = false;

  /// Linear interpolation between bin centres; zero outside the grid.
  double at(double e) const;
};

DosCurve density_of_states(const ClassicalModel& model, const EnergyGrid& grid, const QuadratureSpec& spec);

struct ShellAverage {
  double value = 0.0;
  double stderr_ = 0.0;
  std::uint64_t shell_samples = 0;
};

/// Average of `observable` over the shell |H - E| < shell_width / 2.
ShellAverage microcanonical_average_classical(const ClassicalModel& model, const PhaseFunction& observable, double energy,
                                              double shell_width, const QuadratureSpec& spec);
/// Shell averages on every bin of a grid from one sampling pass.
std::vector<ShellAverage> microcanonical_profile(const ClassicalModel& model, const PhaseFunction& observable,
                                                 const EnergyGrid& grid, const QuadratureSpec& spec);

/// Deterministic alternative to Monte Carlo that integrates one coordinate
/// pair in closed form: p for LMG (H is quadratic in p at fixed q) and the
/// field plane for Dicke (a shifted disk at fixed jz, phi). The remaining
/// coordinates use a midpoint rule with `points` nodes per axis.
struct ReducedQuadrature {
  std::size_t points = 1u << 15;
};

/// (1/2pi) * integral of `weight` (1 if null) over {H(q,p) < E}.
double lmg_phase_integral(double alpha, double energy, LmgClassicalForm form, const PhaseFunction* weight,
                          const ReducedQuadrature& rq = {});
/// (2pi)^-2 * phase-space volume of {H < E} with the (q, p) plane unbounded.
double dicke_phase_volume(const DickeParams& params, double energy, DickeCoupling coupling,
                          const ReducedQuadrature& rq = {.points = 2048});

/// Bin-averaged densities from volume differences at the bin edges.
DosCurve lmg_density_reduced(double alpha, const EnergyGrid& grid, LmgClassicalForm form = LmgClassicalForm::qq_consistent,
                             const ReducedQuadrature& rq = {});
DosCurve dicke_density_reduced(const DickeParams& params, const EnergyGrid& grid,
                               DickeCoupling coupling = DickeCoupling::field,
                               const ReducedQuadrature& rq = {.points = 2048});
/// Shell average over E - w/2 < H < E + w/2.
double lmg_shell_average_reduced(double alpha, const PhaseFunction& observable, double energy, double shell_width,
                                 LmgClassicalForm form = LmgClassicalForm::qq_consistent,
                                 const ReducedQuadrature& rq = {});

/// Function sampled on a uniform grid.
struct Curve {
  std::vector<double> x;
  std::vector<double> y;

  double step() const { return x.size() > 1 ? x[1] - x[0] : 0.0; }
  double at(double e) const;
};

/// DOS curve rescaled from intensive energies e to E = scale * e, with
/// g_E(E) = g(E / scale) / scale.
Curve extensive_curve(const DosCurve& dos, double scale);

/// Local quadratic least-squares fit evaluated on the grid points; each fit
/// uses the samples with |x - x0| <= window / 2.
Curve local_quadratic_smooth(std::span<const double> xs, std::span<const double> ys, std::span<const double> grid,
                             double window);

struct CrookCondition {
  double energy = 0.0;
  double delta_e2 = 0.0;
  double g = 0.0, dg = 0.0, d2g = 0.0;
  double P = 0.0, dP = 0.0, d2P = 0.0;
  double g_step = 0.0, p_step = 0.0;
  double value = 0.0;
};

/// |g''/g + P''/P + P'g'/(P g)| (Delta E)^2 with second-order central
/// differences on each curve's native grid.
CrookCondition evaluate_crook_condition(const Curve& dos, const Curve& transition, double delta_e2, double energy);

struct SrednickiCondition {
  double energy = 0.0;
  double delta_e2 = 0.0;
  double O = 0.0, d2O = 0.0;
  double step = 0.0;
  double value = 0.0;
};

/// (Delta E)^2 |O''(E) / O(E)|; throws NumericalError when |O(E)| < tolerance.
SrednickiCondition evaluate_srednicki_condition(const Curve& profile, double delta_e2, double energy,
                                                double tolerance = 1e-12);

void write_dos_csv(std::ostream& out, const DosCurve& dos);

}  // namespace qfluct
