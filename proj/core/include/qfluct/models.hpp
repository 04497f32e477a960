#pragma once

// Collective-model Hamiltonians (LMG and Dicke) in symmetry-reduced bases,
// full-spectrum diagonalization and observable matrices.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace qfluct {

/// Parity sector selection. LMG parity is (-1)^{n_t}; Dicke parity is
/// (-1)^{n + m + j}. `full` keeps the whole symmetric space.
enum class Parity { full, even, odd };

std::string_view to_string(Parity p);
Parity parity_from_string(std::string_view s);

struct LmgParams {
  int atoms = 2;  ///< N, number of two-level atoms
  double alpha = 0.5;
  Parity sector = Parity::full;

  void validate() const;
};

struct DickeParams {
  int two_j = 1;  ///< 2j = N, number of atoms
  int n_max = 1;  ///< photon cutoff (inclusive)
  double omega = 1.0;
  double omega0 = 1.0;
  double alpha = 0.0;
  Parity sector = Parity::full;
  /// Summed weight allowed on the top 5% photon layers of a used eigenvector.
  double tail_tolerance = 1e-8;

  double j() const { return 0.5 * two_j; }
  void validate() const;
};

using ModelSpec = std::variant<LmgParams, DickeParams>;

std::string model_tag(const ModelSpec& model);
double model_alpha(const ModelSpec& model);
ModelSpec with_alpha(const ModelSpec& model, double alpha);
/// True if both specs describe the same Hilbert space (alpha may differ).
bool same_basis(const ModelSpec& a, const ModelSpec& b);

/// One basis vector: |n_t> for LMG (two_m unused), |n, m_j> for Dicke.
struct BasisLabel {
  int n = 0;      ///< n_t (LMG) or photon number (Dicke)
  int two_m = 0;  ///< 2 m_j (Dicke only)
  auto operator<=>(const BasisLabel&) const = default;
};

std::vector<BasisLabel> model_basis(const ModelSpec& model);

struct HamiltonianMatrix {
  ModelSpec model;
  std::vector<BasisLabel> basis;
  Eigen::SparseMatrix<double> entries;

  Eigen::Index dimension() const { return entries.rows(); }
  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(entries); }
};

/// H = alpha t^dag t - (1 - alpha)/N Q.Q with Q = s^dag t + t^dag s, in the
/// fixed-N sector (optionally restricted to one n_t parity).
HamiltonianMatrix build_lmg_hamiltonian(const LmgParams& params);

/// H = w0 J_z + w a^dag a + alpha/sqrt(N) (J_+ + J_-)(a^dag + a) on |n, m_j>,
/// photon-major ordering (index = n (2j+1) + m + j before parity filtering).
HamiltonianMatrix build_dicke_hamiltonian(const DickeParams& params);

HamiltonianMatrix build_hamiltonian(const ModelSpec& model);

/// Ascending spectrum with orthonormal eigenvectors stored as columns.
struct SpectralDecomposition {
  ModelSpec model;
  std::vector<BasisLabel> basis;
  Eigen::VectorXd energies;
  Eigen::MatrixXd vectors;
  double max_residual = 0.0;  ///< max_n |H v_n - E_n v_n| / |H|

  Eigen::Index dimension() const { return energies.size(); }
  double span() const { return energies(energies.size() - 1) - energies(0); }
};

using SpectrumPtr = std::shared_ptr<const SpectralDecomposition>;

struct DiagonalizeOptions {
  double residual_tolerance = 1e-9;
  /// Relative (to spectral span) gap below which levels count as degenerate
  /// for canonical ordering.
  double degeneracy_tolerance = 1e-10;
  bool check_orthogonality = false;
};

/// Dense full-spectrum diagonalization. Eigenvector signs are fixed so the
/// largest-magnitude entry is positive; degenerate blocks are rotated to the
/// unique basis obtained by projecting unit vectors in index order.
SpectralDecomposition diagonalize(const HamiltonianMatrix& h, const DiagonalizeOptions& opts = {});
SpectrumPtr diagonalize_shared(const ModelSpec& model, const DiagonalizeOptions& opts = {});

/// Lowest eigenpair only. For LMG in the full sector both parity blocks are
/// solved and the lower state is returned (even on exact ties).
std::pair<double, Eigen::VectorXd> ground_state(const ModelSpec& model);

/// Groups of consecutive level indices whose mutual gaps are below
/// tolerance * span. Singletons are included.
std::vector<std::pair<Eigen::Index, Eigen::Index>> degenerate_blocks(const Eigen::VectorXd& energies,
                                                                      double relative_tolerance = 1e-10);

/// Ladder-operator construction on explicit Fock spaces; used as an
/// independent check of the hand-coded matrix elements. Refuses LMG N > 10
/// and Dicke dimensions above 200.
HamiltonianMatrix fock_oracle(const ModelSpec& model);

struct ObservableMatrix {
  std::string name;
  ModelSpec model;
  Eigen::SparseMatrix<double> entries;
};

/// LMG: nt_over_N, nt2_over_N2, ntns_over_N2, QQ_over_N2.
/// Dicke: Jz, Jx2, adaga, field_quad2.
ObservableMatrix observable_matrix(std::string_view name, const ModelSpec& model);
std::vector<std::string> observable_names(const ModelSpec& model);

/// <E_n|O|E_n> for every eigenvector.
Eigen::VectorXd eigenbasis_diagonal(const SpectralDecomposition& spec, const ObservableMatrix& obs);
/// V_S^T O V_S restricted to the listed eigenvector indices.
Eigen::MatrixXd eigenbasis_block(const SpectralDecomposition& spec, const ObservableMatrix& obs,
                                 std::span<const Eigen::Index> indices);

struct TruncationReport {
  double worst_tail = 0.0;
  Eigen::Index worst_index = -1;
  Eigen::Index checked = 0;
  int top_layers = 0;
  bool ok = true;
};

/// Summed |coefficient|^2 on the top 5% photon layers for every eigenvector
/// with energy at most `max_energy`.
TruncationReport photon_tail_report(const SpectralDecomposition& spec, double max_energy);
/// Throws TruncationError when any eigenvector below `max_energy` exceeds the
/// tolerance stored in the Dicke parameters.
void require_photon_convergence(const SpectralDecomposition& spec, double max_energy);

void write_spectrum_csv(std::ostream& out, const SpectralDecomposition& spec);
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);

}  // namespace qfluct
