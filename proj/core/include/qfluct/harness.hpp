#pragma once

// Experiment orchestration: declarative configuration, sweeps over sizes,
// points, procedures and seeds, power-law fits and the run manifest.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qfluct/equilibration.hpp"
#include "qfluct/semiclassics.hpp"
#include "qfluct/spectral_stats.hpp"
#include "qfluct/workstats.hpp"

namespace qfluct {

inline constexpr const char* kVersion = "0.3.0";

struct PowerLawFit {
  double exponent = 0.0;  ///< negated slope of log y against log x
  double slope = 0.0;
  double stderr_ = 0.0;
  double r2 = 1.0;
  std::size_t points = 0;
};

/// Least squares on (log x, log y). Needs at least three positive points.
PowerLawFit fit_power_law(std::span<const double> xs, std::span<const double> ys);

/// Energies are intensive: E/N for LMG, E/j for Dicke.
struct SweepPoint {
  double alpha = 0.5;
  double energy = -0.24;
  double alpha_int = 0.53;  ///< procedure (ii) intermediate coupling
};

struct ModelSection {
  std::string name = "lmg";  ///< lmg | dicke
  std::vector<int> sizes;    ///< N for LMG, 2j for Dicke
  std::string parity = "even";
  double omega = 1.0;
  double omega0 = 1.0;
  double n_max_per_j = 28.0;  ///< Dicke cutoff n_max = round(n_max_per_j * j)
  double tail_tolerance = 1e-8;
};

struct PrepSection {
  std::vector<std::string> procedures{"i", "ii"};  ///< i | ii | fock | window
  std::vector<std::uint64_t> seeds{1};
  double start_offset = 0.02;       ///< procedure (ii), intensive
  double energy_tolerance = 1e-6;   ///< intensive
  std::string relaxation = "dephase";
  double relax_time = 0.0;
  int max_cycles = 10'000;
  int window_k = 25;
  double fock_slack = 0.5;
};

struct DiagnosticsSection {
  std::vector<SweepPoint> points;
  std::vector<std::string> observables;  ///< empty selects the model defaults
  std::string variance_mode = "exact";   ///< exact | sampled
  double horizon = 1e3;
  std::size_t time_samples = 10'000;
  double shell_width = 0.002;  ///< classical reference shell, intensive
  double focus_alpha = 0.5;    ///< energy width, d_eff and time series use this point
  double focus_energy = -0.24;
};

struct CrookSection {
  std::vector<std::vector<double>> trajectories;  ///< each alpha_0 .. alpha_K
  double forward_energy = -0.6;
  double backward_lo = -0.26;
  double backward_hi = -0.14;
  double backward_step = 0.005;
  double alpha_int_forward = 0.25;
  double alpha_int_backward = 0.53;
  bool fock_lattice = false;  ///< snap energies onto the parity sector's Fock energies
  double min_mass = 1e-4;
  double w_lo = -1e300;  ///< error range, intensive
  double w_hi = 1e300;
  std::size_t dos_bins = 600;
};

struct ConditionSection {
  double alpha = 0.5;
  double energy = -0.24;
  double alpha_int = 0.53;
  double alpha_final = 0.2;
  double bin_width = 0.005;  ///< intensive work resolution of P(E, w)
  double smoothing = 0.05;   ///< local quadratic window, fraction of the spectral span
  double half_range = 0.1;   ///< initial energies within this intensive distance enter the fit
  int size = 1600;
};

struct RStatSection {
  double alpha = 0.6;
  double lo = -0.6;  ///< intensive
  double hi = 4.2;
  std::vector<std::size_t> synthetic_sizes{4000};
};

struct ExperimentConfig {
  std::string recipe;  ///< fig1 | fig2 | fig3 | fig4 | condition | rstat | dos | empty
  ModelSection model;
  PrepSection prep;
  DiagnosticsSection diagnostics;
  CrookSection crook;
  ConditionSection condition;
  RStatSection rstat;
  std::filesystem::path output_dir = "out";
  unsigned workers = 1;

  void validate() const;
};

std::string config_to_json(const ExperimentConfig& cfg);
/// Throws ParameterError on malformed input or unknown keys.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Desk-scale defaults for a named recipe.
ExperimentConfig recipe_config(const std::string& recipe);
std::vector<std::string> recipe_names();

/// Spec for one size of the configured model at coupling alpha.
ModelSpec model_spec(const ExperimentConfig& cfg, int size, double alpha);
/// N for LMG, j for Dicke: the unit of the intensive energies.
double energy_unit(const ModelSpec& model);

/// Builds one equilibrium state of the named procedure at intensive energy
/// `energy` on `target`. Spectra for intermediate couplings come from `spectra`.
QuantumState prepare_state(const ExperimentConfig& cfg, const std::string& procedure, SpectrumCache& spectra,
                           double alpha, double energy, double alpha_int, std::uint64_t seed);
/// Diagonal ensemble of a prepared state, or the uniform window for "window".
DiagonalEnsemble prepare_ensemble(const ExperimentConfig& cfg, const std::string& procedure, SpectrumCache& spectra,
                                  double alpha, double energy, double alpha_int, std::uint64_t seed);

/// Nearest energy E = w0 m + w n available to Fock states of the parity
/// sector (absolute units).
double fock_lattice_energy(const DickeParams& params, double energy);

/// Runs fn(0) .. fn(n-1) on at most `workers` threads. Exceptions are
/// captured per index and returned in index order (null: success).
std::vector<std::exception_ptr> parallel_for(std::size_t n, unsigned workers,
                                             const std::function<void(std::size_t)>& fn);

// Thermalisation sweep ------------------------------------------------------

struct ThermalCell {
  int size = 0;
  SweepPoint point;
  std::string procedure;
  std::uint64_t seed = 0;
  double sigma2 = 0.0;        ///< observable-averaged fluctuation variance
  double delta = 0.0;         ///< observable-averaged |long-time - microcanonical|
  double mean_energy = 0.0;   ///< intensive
  double energy_width = 0.0;  ///< intensive standard deviation of the energy distribution
  double d_eff = 0.0;
  int cycles = 0;
  bool short_horizon = false;
  std::string note;
  std::string error;
};

struct ThermalScaling {
  std::string procedure;
  std::vector<double> sizes;
  std::vector<double> sigma2, delta, energy_width, d_eff;
  PowerLawFit sigma2_fit, sigma_fit, delta_fit, energy_width_fit, d_eff_fit;
};

struct ThermalStudy {
  std::vector<ThermalCell> cells;
  std::vector<ThermalScaling> scaling;
  bool partial = false;
};

ThermalStudy thermalisation_study(const ExperimentConfig& cfg);

// Crook sweeps ---------------------------------------------------------------

struct CrookCell {
  int size = 0;
  std::string procedure;
  std::uint64_t seed = 0;
  std::string trajectory;
  CrookComparison comparison;
  double range_error = 0.0;  ///< mean relative error over included bins with w_lo < w/unit < w_hi
  std::size_t range_bins = 0;
  WorkHistogram forward;
  std::vector<BackwardMember> backward;
  std::vector<double> dropped_energies;  ///< backward energies whose preparation failed
  double forward_mean_energy = 0.0;
  /// Photon tail on the end-point levels that feed the compared bins: the
  /// population-weighted start tail and the worst landing eigenvector.
  double endpoint_tail = 0.0;
  double intermediate_tail = 0.0;  ///< population-weighted tail at intermediate stops
  std::string error;
};

struct CrookStudy {
  std::vector<CrookCell> cells;
  /// Seed-averaged D per (procedure, trajectory) and size, with fits when
  /// at least three sizes succeeded.
  struct Series {
    std::string procedure;
    std::string trajectory;
    std::vector<double> sizes;
    std::vector<double> distance;
    std::optional<PowerLawFit> fit;
  };
  std::vector<Series> series;
  bool partial = false;
};

CrookStudy crook_study(const ExperimentConfig& cfg);

// Validity condition ------------------------------------------------------------

struct ConditionCell {
  std::string procedure;
  std::uint64_t seed = 0;
  double work = 0.0;  ///< absolute work at which P(E, w) is evaluated
  Curve transition;
  CrookCondition condition;
};

/// The condition for each procedure at one (alpha, E), using P(E, w) of the
/// sudden quench alpha -> alpha_final evaluated at the procedure-(i) mean work.
std::vector<ConditionCell> condition_study(const ExperimentConfig& cfg);

// Chaos indicator ------------------------------------------------------------

struct RStatStudy {
  std::vector<std::pair<int, RStatReport>> model;
  RStatReport poisson;
  RStatReport goe;
};

RStatStudy rstat_study(const ExperimentConfig& cfg);

// Quantum-classical staircase ---------------------------------------------------

struct StaircaseCheck {
  int size = 0;
  double alpha = 0.0;
  std::vector<double> energy;     ///< intensive level energies
  std::vector<double> quantum;    ///< (n + 1/2) / levels
  std::vector<double> classical;  ///< normalised phase-space volume below E
  double sup_error = 0.0;         ///< over the central levels only
  double trim = 0.02;             ///< fraction dropped at each spectral edge
};

/// LMG only: counting function of the configured parity sector against the
/// normalised classical volume.
StaircaseCheck staircase_check(const ExperimentConfig& cfg, int size, double alpha, double trim = 0.02);

// Manifest --------------------------------------------------------------------

struct OutputFile {
  std::string path;  ///< relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct StageFailure {
  std::string stage;
  std::string kind;  ///< config | numerical | partial
  std::string message;
};

struct RunManifest {
  ExperimentConfig config;
  std::string version = kVersion;
  std::vector<StageTiming> timings;
  std::vector<OutputFile> outputs;
  std::vector<std::string> notes;
  std::optional<StageFailure> failure;

  bool ok() const { return !failure; }
};

std::string sha256_file(const std::filesystem::path& path);
std::string manifest_to_json(const RunManifest& m);
/// Recomputes every listed checksum; returns the paths that do not match.
std::vector<std::string> verify_manifest(const RunManifest& m);

/// Executes the configured recipe and writes its CSV/JSON products plus
/// manifest.json into the output directory. Errors are recorded in the
/// manifest instead of propagating; config errors still throw ParameterError.
RunManifest run_experiment(const ExperimentConfig& cfg);

}  // namespace qfluct
