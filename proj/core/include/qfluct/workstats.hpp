#pragma once

// Two-point-measurement work statistics along piecewise quench trajectories,
// forward/backward ratios and the distance to the density-of-states ratio.

#include <cstdint>
#include <functional>
#include <future>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "qfluct/equilibration.hpp"
#include "qfluct/semiclassics.hpp"

namespace qfluct {

enum class Composition { dephased, coherent };

/// alpha_0 -> alpha_1 -> ... -> alpha_K. The system relaxes (dephases) at each
/// intermediate stop when composition is `dephased`.
struct Trajectory {
  std::vector<double> alphas;
  Composition composition = Composition::dephased;

  void validate() const;
  Trajectory reversed() const;
  std::string label() const;
};

/// Thread-safe memo of spectra for one Hilbert space, keyed by alpha, and of
/// the composed level-to-level propagators of whole trajectories.
class SpectrumCache {
 public:
  explicit SpectrumCache(ModelSpec model, DiagonalizeOptions opts = {});

  SpectrumPtr get(double alpha);
  /// Drops the cached spectrum; cached propagators stay valid.
  void release(double alpha);
  /// Column n holds the final-level distribution for initial level n.
  std::shared_ptr<const Eigen::MatrixXd> propagator(const Trajectory& trajectory);
  const ModelSpec& model() const { return model_; }

 private:
  ModelSpec model_;
  DiagonalizeOptions opts_;
  std::mutex mutex_;
  std::map<double, std::shared_future<SpectrumPtr>> spectra_;
  std::map<std::pair<std::vector<double>, int>, std::shared_future<std::shared_ptr<const Eigen::MatrixXd>>> propagators_;
};

/// |<E_m(B)|E_n(A)>|^2, rows indexed by B levels and columns by A levels.
Eigen::MatrixXd transition_matrix(const SpectralDecomposition& a, const SpectralDecomposition& b);

/// Discrete work lines: probability mass at each (initial, final) level pair.
struct WorkSpectrum {
  std::vector<double> work;
  std::vector<double> probability;

  double total() const;
  double mean() const;
};

enum class WorkMode { exact, sampled };

struct WorkOptions {
  WorkMode mode = WorkMode::exact;
  std::uint64_t samples = 1'000'000;
  std::uint64_t seed = 1;
  double population_cutoff = 0.0;  ///< initial levels with p_n <= cutoff are skipped
};

struct WorkBins {
  std::vector<double> edges;

  static WorkBins uniform(double anchor, double width, double lo, double hi);
  std::size_t size() const { return edges.empty() ? 0 : edges.size() - 1; }
  double center(std::size_t k) const { return 0.5 * (edges[k] + edges[k + 1]); }
  std::optional<std::size_t> locate(double w) const;
  void validate() const;
};

struct WorkHistogram {
  std::vector<double> edges;
  std::vector<double> probability;
  double total = 0.0;
  double uncovered = 0.0;
  std::string initial;
  double initial_energy = 0.0;
  WorkMode mode = WorkMode::exact;
  std::uint64_t samples = 0;
  std::uint64_t seed = 0;

  double mass_at(double w) const;  ///< mass of the bin containing w, 0 outside
};

/// Work lines for initial populations on the alpha_0 eigenbasis.
WorkSpectrum tpm_work_spectrum(const DiagonalEnsemble& initial, const Trajectory& trajectory, SpectrumCache& spectra,
                               const WorkOptions& opts = {});
/// Binned work distribution. Throws DomainError when more than `max_uncovered`
/// of the mass falls outside the bins.
WorkHistogram bin_work(const WorkSpectrum& lines, const WorkBins& bins, double max_uncovered = 1e-12);

/// Uniform bins of `width` centred on anchor + k width that cover every work
/// value reachable from the populated levels.
WorkBins support_bins(const DiagonalEnsemble& initial, const Trajectory& trajectory, SpectrumCache& spectra,
                      double anchor, double width);

/// Exact mode sums the propagator straight into the bins.
WorkHistogram tpm_work_distribution(const DiagonalEnsemble& initial, const Trajectory& trajectory, SpectrumCache& spectra,
                                    const WorkBins& bins, const WorkOptions& opts = {}, double max_uncovered = 1e-12);

/// One backward initial state per energy, supplied by `prepare` on the
/// final-alpha spectrum, propagated along the reversed trajectory. Member
/// histograms use bins of `width` centred on E_f - E_k, so the forward bin
/// at w_k = E_k - E_f meets a backward bin at -w_k. A non-positive width
/// selects the ladder step.
struct BackwardMember {
  double energy = 0.0;  ///< target energy of the prepared state
  double mean_energy = 0.0;
  WorkHistogram histogram;
};

using EnsembleFactory = std::function<DiagonalEnsemble(const SpectrumPtr&, double energy)>;

std::vector<BackwardMember> backward_family(const Trajectory& forward, std::span<const double> energies,
                                            double forward_energy, double width, const EnsembleFactory& prepare,
                                            SpectrumCache& spectra, const WorkOptions& opts = {});

/// Evenly spaced energies lo, lo + step, ..., up to hi (inclusive within step/1e6).
std::vector<double> energy_ladder(double lo, double hi, double step);

struct CrookOptions {
  double min_mass = 1e-4;  ///< both forward and backward bin masses must reach this
  double energy_scale = 1.0;  ///< DOS curves are read at E / energy_scale
};

struct CrookComparison {
  std::vector<double> w;
  std::vector<double> forward;
  std::vector<double> backward;
  std::vector<double> measured;
  std::vector<double> theory;
  std::vector<double> match_distance;
  std::vector<bool> included;
  double bin_width = 0.0;
  double forward_energy = 0.0;
  double distance = 0.0;
  std::size_t included_count = 0;
};

/// For each backward member k, w_k = E_k - E_f; the measured ratio is
/// P_f(w_k) / P_b,k(-w_k), both read from bins centred on those values.
CrookComparison crook_ratio(const WorkHistogram& forward, double forward_energy, std::span<const BackwardMember> backward,
                            const DosCurve& dos_initial, const DosCurve& dos_final, const CrookOptions& opts = {});

/// (1/N) sum_i |h_i - ref_i| / ref_i over the included bins; throws when a
/// reference value on an included bin is not positive.
double histogram_distance(std::span<const double> h, std::span<const double> ref, const std::vector<bool>& include = {});

void write_histogram_csv(std::ostream& out, const WorkHistogram& h);
void write_crook_csv(std::ostream& out, const CrookComparison& c);
std::string crook_summary_json(const CrookComparison& c);

}  // namespace qfluct
