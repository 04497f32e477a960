#pragma once

// Equilibrium-state preparation (direct quench, quench-and-agitate, Fock
// selection) and the diagonal-ensemble diagnostics used to judge
// thermalisation.

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qfluct/models.hpp"

namespace qfluct {

struct Provenance {
  std::string procedure;
  std::vector<double> alpha_history;
  int cycles = 0;
  std::string relaxation;
  std::optional<std::uint64_t> seed;
  std::vector<double> energy_trajectory;  ///< mean energy after each landing on the target
  std::string note;
};

struct QuantumState {
  SpectrumPtr basis;
  Eigen::VectorXcd coeffs;
  Provenance provenance;

  double norm_error() const { return std::abs(coeffs.squaredNorm() - 1.0); }
};

struct DiagonalEnsemble {
  SpectrumPtr basis;
  Eigen::VectorXd populations;
};

/// Re-expansion between two eigenbases of the same Hilbert space:
/// C_to = V_to^T V_from C_from.
class Quench {
 public:
  Quench(SpectrumPtr from, SpectrumPtr to);

  const SpectrumPtr& from() const { return from_; }
  const SpectrumPtr& to() const { return to_; }
  const Eigen::MatrixXd& overlap() const { return overlap_; }

  Eigen::VectorXcd forward(const Eigen::VectorXcd& c) const { return overlap_ * c; }
  Eigen::VectorXcd backward(const Eigen::VectorXcd& c) const { return overlap_.transpose() * c; }

 private:
  SpectrumPtr from_;
  SpectrumPtr to_;
  Eigen::MatrixXd overlap_;
};

/// Expands a basis-space vector (e.g. a ground state) in an eigenbasis.
Eigen::VectorXcd expand_in(const SpectralDecomposition& spec, const Eigen::VectorXd& vector);

struct ProcedureIOptions {
  double alpha_min = 0.0;
  double alpha_max = 1.0;
  double tolerance = -1.0;  ///< absolute energy tolerance; negative selects 1e-6 N
  int scan_points = 41;
  int max_iterations = 200;
};

/// Ground state of H(alpha_ini) re-expanded in the target eigenbasis, with
/// alpha_ini found by bisection on the post-quench mean energy.
QuantumState prepare_procedure_i(SpectrumPtr target, double target_energy, const ProcedureIOptions& opts = {});

/// Post-quench mean energy of the H(alpha_ini) ground state, measured with
/// the target Hamiltonian.
double quenched_ground_energy(const SpectralDecomposition& target, double alpha_ini);

enum class Relaxation { dephase, unitary };

struct RelaxSpec {
  Relaxation mode = Relaxation::dephase;
  double time = 0.0;  ///< unitary mode only
};

struct ProcedureIIOptions {
  double start_offset = 0.0;  ///< initial quenched energy sits this far below the target
  int max_cycles = 10'000;
  double tolerance = -1.0;    ///< negative selects 1e-6 N
  RelaxSpec relax;
  std::uint64_t seed = 1;
  int max_iterations = 200;
  ProcedureIOptions start;    ///< search interval for the starting ground state
};

/// Starts from a quenched ground state, pre-quenches to alpha_int, and
/// alternates alpha_int <-> alpha_target quenches with relaxation after each,
/// stopping after a landing on alpha_target whose mean energy matches the
/// target. `intermediate` must share the target's Hilbert space.
QuantumState prepare_procedure_ii(SpectrumPtr intermediate, SpectrumPtr target, double target_energy,
                                  const ProcedureIIOptions& opts);

struct FockCandidate {
  BasisLabel label;
  Eigen::Index basis_index = 0;
  double energy = 0.0;
  double mean_relative_error = 0.0;
};

struct FockSelection {
  QuantumState state;
  FockCandidate best;
  std::vector<FockCandidate> candidates;
};

/// Picks, among Fock states |n, m_j> with |w0 m + w n - E| <= slack, the one
/// whose long-time averages best match the (2k+1)-level window averages.
FockSelection select_fock_state(SpectrumPtr spec, double target_energy, std::span<const std::string> observables,
                                int window_k = 25, double slack = 0.5);

DiagonalEnsemble diagonal_ensemble(const QuantumState& state);
/// Uniform populations over the 2k+1 levels around the level nearest E.
DiagonalEnsemble microcanonical_window_ensemble(SpectrumPtr spec, double energy, int window_k);

struct ObservableTimeSeries {
  std::string observable;
  std::vector<double> times;
  std::vector<double> values;
  double horizon = 0.0;
};

/// <O>(t) with the populated part of the state (|C_n|^2 above `cutoff`).
ObservableTimeSeries evolve_expectation(const QuantumState& state, const ObservableMatrix& obs,
                                        std::span<const double> times, double cutoff = 1e-16);
std::vector<double> uniform_times(double horizon, std::size_t samples);

/// Tr[rho_bar O], keeping intra-block coherences of degenerate levels.
double long_time_average(const QuantumState& state, const ObservableMatrix& obs, double degeneracy_tolerance = 1e-10);

enum class VarianceMode { sampled, exact };

struct FluctuationResult {
  double variance = 0.0;
  VarianceMode mode = VarianceMode::exact;
  double horizon = 0.0;
  std::size_t samples = 0;
  bool short_horizon = false;  ///< horizon below the inverse mean level spacing of the populated band
};

FluctuationResult fluctuation_variance(const QuantumState& state, const ObservableMatrix& obs, VarianceMode mode,
                                       double horizon = 1e3, std::size_t samples = 10'000,
                                       double degeneracy_tolerance = 1e-10, double cutoff = 1e-16);

double effective_dimension(const DiagonalEnsemble& ensemble);

struct EnergyMoments {
  double mean = 0.0;
  double delta_e2 = 0.0;
};
EnergyMoments energy_moments(const DiagonalEnsemble& ensemble, const SpectralDecomposition& spectrum);

/// Index of the level nearest E and the symmetric window around it; throws
/// when the window would be clipped by a spectral edge.
std::pair<Eigen::Index, Eigen::Index> level_window(const Eigen::VectorXd& energies, double energy, int window_k);

double microcanonical_window_average(const SpectralDecomposition& spectrum, const Eigen::VectorXd& observable_diagonal,
                                     double energy, int window_k);
double microcanonical_window_average(const SpectralDecomposition& spectrum, const ObservableMatrix& obs, double energy,
                                     int window_k);

}  // namespace qfluct
