#include "qfluct/models.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "linalg.hpp"
#include "qfluct/errors.hpp"
#include "qfluct/runtime.hpp"

namespace qfluct {

namespace {

using Triplet = Eigen::Triplet<double>;

bool in_sector(Parity sector, int parity_count) {
  switch (sector) {
    case Parity::full:
      return true;
    case Parity::even:
      return parity_count % 2 == 0;
    case Parity::odd:
      return parity_count % 2 != 0;
  }
  return true;
}

// Index map over the unrestricted basis; -1 marks states outside the sector.
struct SectorIndex {
  std::vector<BasisLabel> basis;
  std::vector<Eigen::Index> index;
};

SectorIndex lmg_sector(const LmgParams& p) {
  SectorIndex s;
  s.index.assign(static_cast<std::size_t>(p.atoms) + 1, -1);
  for (int nt = 0; nt <= p.atoms; ++nt) {
    if (!in_sector(p.sector, nt)) continue;
    s.index[static_cast<std::size_t>(nt)] = static_cast<Eigen::Index>(s.basis.size());
    s.basis.push_back({nt, 0});
  }
  return s;
}

std::size_t dicke_flat(const DickeParams& p, int n, int two_m) {
  return static_cast<std::size_t>(n) * static_cast<std::size_t>(p.two_j + 1) +
         static_cast<std::size_t>((two_m + p.two_j) / 2);
}

SectorIndex dicke_sector(const DickeParams& p) {
  SectorIndex s;
  s.index.assign(static_cast<std::size_t>(p.n_max + 1) * static_cast<std::size_t>(p.two_j + 1), -1);
  for (int n = 0; n <= p.n_max; ++n) {
    for (int two_m = -p.two_j; two_m <= p.two_j; two_m += 2) {
      if (!in_sector(p.sector, n + (two_m + p.two_j) / 2)) continue;
      s.index[dicke_flat(p, n, two_m)] = static_cast<Eigen::Index>(s.basis.size());
      s.basis.push_back({n, two_m});
    }
  }
  return s;
}

// <m+1|J_+|m> with m = two_m / 2
double raise(int two_j, int two_m) {
  const double j = 0.5 * two_j;
  const double m = 0.5 * two_m;
  return std::sqrt(std::max(0.0, j * (j + 1.0) - m * (m + 1.0)));
}

// Q.Q matrix elements in the fixed-N sector.
double qq_diagonal(int atoms, int nt) {
  const double n = nt;
  const double N = atoms;
  return (n + 1.0) * (N - n) + n * (N - n + 1.0);
}

double qq_step2(int atoms, int nt) {
  const double n = nt;
  const double N = atoms;
  return std::sqrt((n + 1.0) * (N - n) * (n + 2.0) * (N - n - 1.0));
}

Eigen::SparseMatrix<double> from_triplets(Eigen::Index dim, const std::vector<Triplet>& t) {
  Eigen::SparseMatrix<double> m(dim, dim);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

bool is_tridiagonal(const Eigen::SparseMatrix<double>& m) {
  for (int k = 0; k < m.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
      if (std::abs(it.row() - it.col()) > 1 && it.value() != 0.0) return false;
    }
  }
  return true;
}

void split_tridiagonal(const Eigen::SparseMatrix<double>& m, Eigen::VectorXd& d, Eigen::VectorXd& e) {
  const Eigen::Index n = m.rows();
  d = Eigen::VectorXd::Zero(n);
  e = Eigen::VectorXd::Zero(std::max<Eigen::Index>(n - 1, 0));
  for (int k = 0; k < m.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
      if (it.row() == it.col()) d(it.row()) = it.value();
      if (it.row() == it.col() + 1) e(it.col()) = it.value();
    }
  }
}

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  const double peak = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) >= (1.0 - 1e-8) * peak) {
      if (v(i) < 0.0) v = -v;
      return;
    }
  }
}

// Replace a degenerate block by the basis obtained from Gram-Schmidt on the
// projections of unit vectors e_0, e_1, ..., accepting at each step the first
// index whose residual is at least half the largest residual.
void canonicalize_block(Eigen::Ref<Eigen::MatrixXd> block) {
  // Work in the k-dimensional coordinates of the block: P e_i = B c_i with
  // c_i = B^T e_i, and B has orthonormal columns, so norms carry over.
  const Eigen::Index n = block.rows();
  const Eigen::Index k = block.cols();
  const Eigen::MatrixXd coords = block.transpose();  // k x n, column i = c_i
  Eigen::MatrixXd chosen(k, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::MatrixXd resid = coords;
    if (c > 0) resid -= chosen.leftCols(c) * (chosen.leftCols(c).transpose() * coords);
    const Eigen::VectorXd norms = resid.colwise().norm().transpose();
    const double peak = norms.maxCoeff();
    Eigen::Index pick = 0;
    while (pick < n - 1 && norms(pick) < 0.5 * peak) ++pick;
    Eigen::VectorXd r = resid.col(pick);
    if (c > 0) r -= chosen.leftCols(c) * (chosen.leftCols(c).transpose() * r);
    chosen.col(c) = r / r.norm();
  }
  block = Eigen::MatrixXd(block * chosen);
}

}  // namespace

std::string_view to_string(Parity p) {
  switch (p) {
    case Parity::full:
      return "full";
    case Parity::even:
      return "even";
    case Parity::odd:
      return "odd";
  }
  return "full";
}

Parity parity_from_string(std::string_view s) {
  if (s == "full") return Parity::full;
  if (s == "even") return Parity::even;
  if (s == "odd") return Parity::odd;
  throw ParameterError("unknown parity sector '" + std::string(s) + "'");
}

void LmgParams::validate() const {
  if (atoms < 2) throw ParameterError("LMG requires N >= 2, got " + std::to_string(atoms));
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("LMG alpha must lie in [0, 1]");
}

void DickeParams::validate() const {
  if (two_j < 1) throw ParameterError("Dicke requires 2j >= 1");
  if (n_max < 1) throw ParameterError("Dicke photon cutoff n_max must be >= 1");
  if (!(omega > 0.0) || !(omega0 > 0.0)) throw ParameterError("Dicke frequencies must be positive");
  if (!std::isfinite(alpha)) throw ParameterError("Dicke coupling must be finite");
  if (!(tail_tolerance > 0.0)) throw ParameterError("tail tolerance must be positive");
}

std::string model_tag(const ModelSpec& model) { return std::holds_alternative<LmgParams>(model) ? "lmg" : "dicke"; }

double model_alpha(const ModelSpec& model) {
  return std::visit([](const auto& p) { return p.alpha; }, model);
}

ModelSpec with_alpha(const ModelSpec& model, double alpha) {
  return std::visit(
      [alpha](auto p) -> ModelSpec {
        p.alpha = alpha;
        return p;
      },
      model);
}

bool same_basis(const ModelSpec& a, const ModelSpec& b) {
  if (a.index() != b.index()) return false;
  if (const auto* la = std::get_if<LmgParams>(&a)) {
    const auto& lb = std::get<LmgParams>(b);
    return la->atoms == lb.atoms && la->sector == lb.sector;
  }
  const auto& da = std::get<DickeParams>(a);
  const auto& db = std::get<DickeParams>(b);
  return da.two_j == db.two_j && da.n_max == db.n_max && da.sector == db.sector;
}

std::vector<BasisLabel> model_basis(const ModelSpec& model) {
  if (const auto* l = std::get_if<LmgParams>(&model)) return lmg_sector(*l).basis;
  return dicke_sector(std::get<DickeParams>(model)).basis;
}

HamiltonianMatrix build_lmg_hamiltonian(const LmgParams& params) {
  params.validate();
  const SectorIndex s = lmg_sector(params);
  const int N = params.atoms;
  const double coupling = (1.0 - params.alpha) / N;
  std::vector<Triplet> t;
  t.reserve(3 * s.basis.size());
  for (const BasisLabel& b : s.basis) {
    const int nt = b.n;
    const Eigen::Index row = s.index[static_cast<std::size_t>(nt)];
    t.emplace_back(row, row, params.alpha * nt - coupling * qq_diagonal(N, nt));
    if (nt + 2 <= N) {
      const Eigen::Index col = s.index[static_cast<std::size_t>(nt + 2)];
      const double v = -coupling * qq_step2(N, nt);
      if (col >= 0 && v != 0.0) {
        t.emplace_back(row, col, v);
        t.emplace_back(col, row, v);
      }
    }
  }
  return {params, s.basis, from_triplets(static_cast<Eigen::Index>(s.basis.size()), t)};
}

HamiltonianMatrix build_dicke_hamiltonian(const DickeParams& params) {
  params.validate();
  const SectorIndex s = dicke_sector(params);
  const double g = params.alpha / std::sqrt(static_cast<double>(params.two_j));
  std::vector<Triplet> t;
  t.reserve(5 * s.basis.size());
  for (const BasisLabel& b : s.basis) {
    const Eigen::Index row = s.index[dicke_flat(params, b.n, b.two_m)];
    t.emplace_back(row, row, params.omega0 * 0.5 * b.two_m + params.omega * b.n);
    if (b.n + 1 > params.n_max || g == 0.0) continue;
    const double photon = std::sqrt(b.n + 1.0);
    // (n, m) -> (n + 1, m +- 1); the hermitian partners come from symmetry.
    for (int dm : {+2, -2}) {
      const int two_m = b.two_m + dm;
      if (std::abs(two_m) > params.two_j) continue;
      const double spin = dm > 0 ? raise(params.two_j, b.two_m) : raise(params.two_j, two_m);
      const Eigen::Index col = s.index[dicke_flat(params, b.n + 1, two_m)];
      if (col < 0) continue;
      const double v = g * photon * spin;
      t.emplace_back(row, col, v);
      t.emplace_back(col, row, v);
    }
  }
  return {params, s.basis, from_triplets(static_cast<Eigen::Index>(s.basis.size()), t)};
}

HamiltonianMatrix build_hamiltonian(const ModelSpec& model) {
  if (const auto* l = std::get_if<LmgParams>(&model)) return build_lmg_hamiltonian(*l);
  return build_dicke_hamiltonian(std::get<DickeParams>(model));
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> degenerate_blocks(const Eigen::VectorXd& energies,
                                                                      double relative_tolerance) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> blocks;
  const Eigen::Index n = energies.size();
  if (n == 0) return blocks;
  const double span = energies(n - 1) - energies(0);
  const double tol = relative_tolerance * std::max(span, 1.0);
  Eigen::Index start = 0;
  for (Eigen::Index i = 1; i <= n; ++i) {
    if (i == n || energies(i) - energies(i - 1) > tol) {
      blocks.emplace_back(start, i - start);
      start = i;
    }
  }
  return blocks;
}

SpectralDecomposition diagonalize(const HamiltonianMatrix& h, const DiagonalizeOptions& opts) {
  require_sound_blas();
  if (!h.entries.isApprox(Eigen::SparseMatrix<double>(h.entries.transpose()), 1e-14)) {
    throw SolverError("Hamiltonian matrix is not symmetric");
  }
  detail::EigenPairs pairs;
  if (is_tridiagonal(h.entries)) {
    Eigen::VectorXd d, e;
    split_tridiagonal(h.entries, d, e);
    pairs = detail::tridiagonal_eigen(d, e);
  } else {
    pairs = detail::symmetric_eigen(h.dense());
  }

  SpectralDecomposition out{h.model, h.basis, std::move(pairs.values), std::move(pairs.vectors), 0.0};
  const Eigen::Index n = out.dimension();
  for (const auto& [start, len] : degenerate_blocks(out.energies, opts.degeneracy_tolerance)) {
    if (len > 1) canonicalize_block(out.vectors.middleCols(start, len));
  }
  for (Eigen::Index k = 0; k < n; ++k) fix_sign(out.vectors.col(k));

  // Residual check with the sparse operator.
  const double hnorm = std::max({std::abs(out.energies(0)), std::abs(out.energies(n - 1)), 1e-300});
  constexpr Eigen::Index chunk = 256;
  for (Eigen::Index c0 = 0; c0 < n; c0 += chunk) {
    const Eigen::Index len = std::min(chunk, n - c0);
    Eigen::MatrixXd r = h.entries * out.vectors.middleCols(c0, len);
    r -= out.vectors.middleCols(c0, len) * out.energies.segment(c0, len).asDiagonal();
    out.max_residual = std::max(out.max_residual, r.colwise().norm().maxCoeff() / hnorm);
  }
  if (out.max_residual > opts.residual_tolerance) {
    throw SolverError("eigen-residual " + std::to_string(out.max_residual) + " exceeds tolerance");
  }
  if (opts.check_orthogonality) {
    const double err = (out.vectors.transpose() * out.vectors - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    if (err > opts.residual_tolerance) throw SolverError("eigenvectors not orthonormal: " + std::to_string(err));
  }
  return out;
}

SpectrumPtr diagonalize_shared(const ModelSpec& model, const DiagonalizeOptions& opts) {
  return std::make_shared<const SpectralDecomposition>(diagonalize(build_hamiltonian(model), opts));
}

std::pair<double, Eigen::VectorXd> ground_state(const ModelSpec& model) {
  if (const auto* l = std::get_if<LmgParams>(&model)) {
    auto solve_sector = [&](Parity sector) {
      LmgParams p = *l;
      p.sector = sector;
      const HamiltonianMatrix h = build_lmg_hamiltonian(p);
      Eigen::VectorXd d, e;
      split_tridiagonal(h.entries, d, e);
      auto pair = detail::lowest_tridiagonal(d, e);
      Eigen::VectorXd v = pair.vectors.col(0);
      fix_sign(v);
      return std::make_tuple(pair.values(0), v, h.basis);
    };
    if (l->sector != Parity::full) {
      auto [e, v, b] = solve_sector(l->sector);
      return {e, v};
    }
    auto [ee, ve, be] = solve_sector(Parity::even);
    auto [eo, vo, bo] = solve_sector(Parity::odd);
    const bool take_even = ee <= eo;
    const Eigen::VectorXd& v = take_even ? ve : vo;
    const auto& labels = take_even ? be : bo;
    Eigen::VectorXd full = Eigen::VectorXd::Zero(l->atoms + 1);
    for (std::size_t i = 0; i < labels.size(); ++i) full(labels[i].n) = v(static_cast<Eigen::Index>(i));
    return {take_even ? ee : eo, full};
  }
  const HamiltonianMatrix h = build_hamiltonian(model);
  auto pair = detail::lowest_symmetric(h.dense());
  Eigen::VectorXd v = pair.vectors.col(0);
  fix_sign(v);
  return {pair.values(0), v};
}

std::vector<std::string> observable_names(const ModelSpec& model) {
  if (std::holds_alternative<LmgParams>(model)) return {"nt_over_N", "nt2_over_N2", "ntns_over_N2", "QQ_over_N2"};
  return {"Jz", "Jx2", "adaga", "field_quad2"};
}

ObservableMatrix observable_matrix(std::string_view name, const ModelSpec& model) {
  const auto names = observable_names(model);
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw ParameterError("unknown observable '" + std::string(name) + "' for model " + model_tag(model));
  }
  std::vector<Triplet> t;
  Eigen::Index dim = 0;
  if (const auto* l = std::get_if<LmgParams>(&model)) {
    const SectorIndex s = lmg_sector(*l);
    dim = static_cast<Eigen::Index>(s.basis.size());
    const double N = l->atoms;
    for (const BasisLabel& b : s.basis) {
      const Eigen::Index row = s.index[static_cast<std::size_t>(b.n)];
      const double nt = b.n;
      if (name == "nt_over_N") {
        t.emplace_back(row, row, nt / N);
      } else if (name == "nt2_over_N2") {
        t.emplace_back(row, row, nt * nt / (N * N));
      } else if (name == "ntns_over_N2") {
        t.emplace_back(row, row, nt * (N - nt) / (N * N));
      } else {
        t.emplace_back(row, row, qq_diagonal(l->atoms, b.n) / (N * N));
        if (b.n + 2 <= l->atoms) {
          const Eigen::Index col = s.index[static_cast<std::size_t>(b.n + 2)];
          const double v = qq_step2(l->atoms, b.n) / (N * N);
          if (col >= 0 && v != 0.0) {
            t.emplace_back(row, col, v);
            t.emplace_back(col, row, v);
          }
        }
      }
    }
  } else {
    const auto& p = std::get<DickeParams>(model);
    const SectorIndex s = dicke_sector(p);
    dim = static_cast<Eigen::Index>(s.basis.size());
    const double j = p.j();
    for (const BasisLabel& b : s.basis) {
      const Eigen::Index row = s.index[dicke_flat(p, b.n, b.two_m)];
      const double m = 0.5 * b.two_m;
      if (name == "Jz") {
        t.emplace_back(row, row, m);
      } else if (name == "adaga") {
        t.emplace_back(row, row, static_cast<double>(b.n));
      } else if (name == "Jx2") {
        t.emplace_back(row, row, 0.5 * (j * (j + 1.0) - m * m));
        if (b.two_m + 4 <= p.two_j) {
          const Eigen::Index col = s.index[dicke_flat(p, b.n, b.two_m + 4)];
          const double v = 0.25 * raise(p.two_j, b.two_m) * raise(p.two_j, b.two_m + 2);
          if (col >= 0) {
            t.emplace_back(row, col, v);
            t.emplace_back(col, row, v);
          }
        }
      } else {
        t.emplace_back(row, row, 2.0 * b.n + 1.0);
        if (b.n + 2 <= p.n_max) {
          const Eigen::Index col = s.index[dicke_flat(p, b.n + 2, b.two_m)];
          const double v = std::sqrt((b.n + 1.0) * (b.n + 2.0));
          if (col >= 0) {
            t.emplace_back(row, col, v);
            t.emplace_back(col, row, v);
          }
        }
      }
    }
  }
  return {std::string(name), model, from_triplets(dim, t)};
}

Eigen::VectorXd eigenbasis_diagonal(const SpectralDecomposition& spec, const ObservableMatrix& obs) {
  if (!same_basis(spec.model, obs.model)) throw ParameterError("observable and spectrum use different bases");
  const Eigen::Index n = spec.dimension();
  Eigen::VectorXd out(n);
  constexpr Eigen::Index chunk = 256;
  for (Eigen::Index c0 = 0; c0 < n; c0 += chunk) {
    const Eigen::Index len = std::min(chunk, n - c0);
    const Eigen::MatrixXd ov = obs.entries * spec.vectors.middleCols(c0, len);
    out.segment(c0, len) = (ov.cwiseProduct(spec.vectors.middleCols(c0, len))).colwise().sum().transpose();
  }
  return out;
}

Eigen::MatrixXd eigenbasis_block(const SpectralDecomposition& spec, const ObservableMatrix& obs,
                                 std::span<const Eigen::Index> indices) {
  if (!same_basis(spec.model, obs.model)) throw ParameterError("observable and spectrum use different bases");
  Eigen::MatrixXd vs(spec.dimension(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) vs.col(static_cast<Eigen::Index>(k)) = spec.vectors.col(indices[k]);
  const Eigen::MatrixXd ov = obs.entries * vs;
  return vs.transpose() * ov;
}

TruncationReport photon_tail_report(const SpectralDecomposition& spec, double max_energy) {
  TruncationReport rep;
  const auto* p = std::get_if<DickeParams>(&spec.model);
  if (p == nullptr) return rep;
  rep.top_layers = std::max(1, static_cast<int>(std::ceil(0.05 * (p->n_max + 1))));
  const int first_top = p->n_max + 1 - rep.top_layers;
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < spec.basis.size(); ++i) {
    if (spec.basis[i].n >= first_top) rows.push_back(static_cast<Eigen::Index>(i));
  }
  for (Eigen::Index k = 0; k < spec.dimension() && spec.energies(k) <= max_energy; ++k) {
    double tail = 0.0;
    for (Eigen::Index r : rows) tail += spec.vectors(r, k) * spec.vectors(r, k);
    ++rep.checked;
    if (tail > rep.worst_tail) {
      rep.worst_tail = tail;
      rep.worst_index = k;
    }
  }
  rep.ok = rep.worst_tail <= p->tail_tolerance;
  return rep;
}

void require_photon_convergence(const SpectralDecomposition& spec, double max_energy) {
  const TruncationReport rep = photon_tail_report(spec, max_energy);
  if (!rep.ok) {
    const auto& p = std::get<DickeParams>(spec.model);
    throw TruncationError("photon cutoff n_max=" + std::to_string(p.n_max) + " too small: eigenvector " +
                          std::to_string(rep.worst_index) + " (E=" + std::to_string(spec.energies(rep.worst_index)) +
                          ") carries tail weight " + std::to_string(rep.worst_tail) + " on the top " +
                          std::to_string(rep.top_layers) + " photon layers");
  }
}

void write_spectrum_csv(std::ostream& out, const SpectralDecomposition& spec) {
  out << "index,energy\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < spec.dimension(); ++i) out << i << ',' << spec.energies(i) << '\n';
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  out << std::setprecision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
    out << '\n';
  }
}

}  // namespace qfluct
