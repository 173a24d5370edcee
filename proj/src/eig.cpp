#include "phihom/eig.hpp"

#include <string>

#include "phihom/errors.hpp"

#if defined(PHIHOM_HAVE_LAPACKE)
#include <lapacke.h>
#endif

namespace phihom {

SymmetricEigensystem symmetric_eigensystem(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols() || A.rows() == 0) {
    throw InvalidInput("symmetric_eigensystem expects a square non-empty matrix");
  }
  SymmetricEigensystem out;
#if defined(PHIHOM_HAVE_LAPACKE)
  const lapack_int n = static_cast<lapack_int>(A.rows());
  out.vectors = A;  // dsyevd overwrites with eigenvectors (column-major)
  out.lambda.resize(n);
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n,
                                         out.vectors.data(), n, out.lambda.data());
  if (info != 0) {
    throw NumericalError("dsyevd failed with info = " + std::to_string(info));
  }
#else
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(A);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("SelfAdjointEigenSolver failed");
  }
  out.lambda = solver.eigenvalues();
  out.vectors = solver.eigenvectors();
#endif
  return out;
}

}  // namespace phihom
