#pragma once

#include <Eigen/Dense>

namespace qfluct::detail {

struct EigenPairs {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

/// In-place dense symmetric solve (LAPACK dsyevd); `a` becomes the eigenvectors.
EigenPairs symmetric_eigen(Eigen::MatrixXd a);

/// Eigenvalues only (LAPACK dsyevd, job N).
Eigen::VectorXd symmetric_eigenvalues(Eigen::MatrixXd a);

/// Symmetric tridiagonal solve (LAPACK dstevr, MRRR).
EigenPairs tridiagonal_eigen(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag);

/// Lowest eigenpair of a dense symmetric matrix (LAPACK dsyevr, range I).
EigenPairs lowest_symmetric(Eigen::MatrixXd a);

/// Lowest eigenpair of a symmetric tridiagonal matrix.
EigenPairs lowest_tridiagonal(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag);

}  // namespace qfluct::detail
