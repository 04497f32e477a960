#include "linalg.hpp"

#include <lapacke.h>

#include <string>
#include <vector>

#include "qfluct/errors.hpp"

namespace qfluct::detail {

EigenPairs symmetric_eigen(Eigen::MatrixXd a) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  EigenPairs out;
  out.values.resize(n);
  if (n == 0) return out;
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, a.data(), n, out.values.data());
  if (info != 0) throw SolverError("dsyevd failed with info = " + std::to_string(info));
  out.vectors = std::move(a);
  return out;
}

Eigen::VectorXd symmetric_eigenvalues(Eigen::MatrixXd a) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  Eigen::VectorXd w(n);
  if (n == 0) return w;
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'U', n, a.data(), n, w.data());
  if (info != 0) throw SolverError("dsyevd failed with info = " + std::to_string(info));
  return w;
}

EigenPairs tridiagonal_eigen(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag) {
  const lapack_int n = static_cast<lapack_int>(diag.size());
  EigenPairs out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  if (n == 0) return out;
  Eigen::VectorXd d = diag;
  Eigen::VectorXd e(std::max<lapack_int>(n, 1));
  e.setZero();
  e.head(n - 1) = offdiag;
  lapack_int found = 0;
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
  const lapack_int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'A', n, d.data(), e.data(), 0.0, 0.0, 0, 0,
                                         0.0, &found, out.values.data(), out.vectors.data(), n, support.data());
  if (info != 0 || found != n) throw SolverError("dstevr failed with info = " + std::to_string(info));
  return out;
}

EigenPairs lowest_symmetric(Eigen::MatrixXd a) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  EigenPairs out;
  out.values.resize(n);
  out.vectors.resize(n, 1);
  lapack_int found = 0;
  std::vector<lapack_int> support(2);
  const lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'I', 'U', n, a.data(), n, 0.0, 0.0, 1, 1, 0.0,
                                         &found, out.values.data(), out.vectors.data(), n, support.data());
  if (info != 0 || found != 1) throw SolverError("dsyevr failed with info = " + std::to_string(info));
  out.values.conservativeResize(1);
  return out;
}

EigenPairs lowest_tridiagonal(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag) {
  const lapack_int n = static_cast<lapack_int>(diag.size());
  EigenPairs out;
  out.values.resize(n);
  out.vectors.resize(n, 1);
  Eigen::VectorXd d = diag;
  Eigen::VectorXd e(std::max<lapack_int>(n, 1));
  e.setZero();
  e.head(n - 1) = offdiag;
  lapack_int found = 0;
  std::vector<lapack_int> support(2);
  const lapack_int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'I', n, d.data(), e.data(), 0.0, 0.0, 1, 1, 0.0,
                                         &found, out.values.data(), out.vectors.data(), n, support.data());
  if (info != 0 || found != 1) throw SolverError("dstevr (range I) failed with info = " + std::to_string(info));
  out.values.conservativeResize(1);
  return out;
}

}  // namespace qfluct::detail
