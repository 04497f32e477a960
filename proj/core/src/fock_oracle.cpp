// Brute-force Hamiltonian construction from bosonic ladder operators. The
// only matrix element used is <n-1|a|n> = sqrt(n); spins are realised with
// two Schwinger bosons. Everything else is matrix algebra.

#include <cmath>
#include <string>

#include "qfluct/errors.hpp"
#include "qfluct/models.hpp"

namespace qfluct {

namespace {

using Eigen::MatrixXd;

MatrixXd annihilation(int levels) {
  MatrixXd a = MatrixXd::Zero(levels, levels);
  for (int n = 1; n < levels; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  }
  return out;
}

// Two-mode space of dimension levels^2 with index (n_first, n_second).
// Returns the isometry onto the states with n_first + n_second = total,
// ordered by ascending n_first.
MatrixXd fixed_total_isometry(int levels, int total) {
  MatrixXd p = MatrixXd::Zero(levels * levels, total + 1);
  for (int n1 = 0; n1 <= total; ++n1) p(n1 * levels + (total - n1), n1) = 1.0;
  return p;
}

Eigen::SparseMatrix<double> to_sparse(const MatrixXd& m) {
  return m.sparseView(1.0, 1e-300);
}

}  // namespace

HamiltonianMatrix fock_oracle(const ModelSpec& model) {
  if (const auto* l = std::get_if<LmgParams>(&model)) {
    l->validate();
    if (l->atoms > 10) throw ParameterError("fock_oracle refuses LMG N > 10");
    const int levels = l->atoms + 1;
    const MatrixXd a = annihilation(levels);
    const MatrixXd id = MatrixXd::Identity(levels, levels);
    // first mode t, second mode s, so the fixed-N isometry orders states by n_t
    const MatrixXd t = kron(a, id);
    const MatrixXd s = kron(id, a);
    const MatrixXd q = s.transpose() * t + t.transpose() * s;
    const MatrixXd h = l->alpha * (t.transpose() * t) - (1.0 - l->alpha) / l->atoms * (q * q);
    const MatrixXd iso = fixed_total_isometry(levels, l->atoms);
    MatrixXd sector = iso.transpose() * h * iso;

    const auto basis = model_basis(model);
    MatrixXd restricted(basis.size(), basis.size());
    for (std::size_t r = 0; r < basis.size(); ++r) {
      for (std::size_t c = 0; c < basis.size(); ++c) restricted(r, c) = sector(basis[r].n, basis[c].n);
    }
    return {model, basis, to_sparse(restricted)};
  }

  const auto& p = std::get<DickeParams>(model);
  p.validate();
  const long full_dim = static_cast<long>(p.two_j + 1) * (p.n_max + 1);
  if (full_dim > 200) throw ParameterError("fock_oracle refuses Dicke dimensions above 200");

  const int spin_levels = p.two_j + 1;
  const MatrixXd b = annihilation(spin_levels);
  const MatrixXd sid = MatrixXd::Identity(spin_levels, spin_levels);
  const MatrixXd up = kron(b, sid);    // boson carrying m = +1/2
  const MatrixXd down = kron(sid, b);  // boson carrying m = -1/2
  const MatrixXd iso = fixed_total_isometry(spin_levels, p.two_j);
  const MatrixXd jplus = iso.transpose() * (up.transpose() * down) * iso;
  const MatrixXd jminus = iso.transpose() * (down.transpose() * up) * iso;
  const MatrixXd jz = iso.transpose() * (0.5 * (up.transpose() * up - down.transpose() * down)) * iso;

  const MatrixXd a = annihilation(p.n_max + 1);
  const MatrixXd pid = MatrixXd::Identity(p.n_max + 1, p.n_max + 1);
  const MatrixXd h = p.omega0 * kron(pid, jz) + p.omega * kron(a.transpose() * a, sid) +
                     p.alpha / std::sqrt(static_cast<double>(p.two_j)) * kron(a + a.transpose(), jplus + jminus);

  const auto basis = model_basis(model);
  auto flat = [&](const BasisLabel& l) { return l.n * spin_levels + (l.two_m + p.two_j) / 2; };
  MatrixXd restricted(basis.size(), basis.size());
  for (std::size_t r = 0; r < basis.size(); ++r) {
    for (std::size_t c = 0; c < basis.size(); ++c) restricted(r, c) = h(flat(basis[r]), flat(basis[c]));
  }
  return {model, basis, to_sparse(restricted)};
}

}  // namespace qfluct
