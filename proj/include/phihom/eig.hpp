#pragma once

#include <Eigen/Dense>

namespace phihom {

// Eigendecomposition of a symmetric matrix: A = V diag(lambda) V^T with
// eigenvalues ascending and orthonormal columns. Dispatches to LAPACK dsyevd
// when available (several times faster than Eigen's QL at N ~ 4000),
// otherwise falls back to Eigen::SelfAdjointEigenSolver.
struct SymmetricEigensystem {
  Eigen::VectorXd lambda;
  Eigen::MatrixXd vectors;
};

SymmetricEigensystem symmetric_eigensystem(const Eigen::MatrixXd& A);

}  // namespace phihom
