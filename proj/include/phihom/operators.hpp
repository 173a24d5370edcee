#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "phihom/cell.hpp"
#include "phihom/coefficient.hpp"
#include "phihom/grid.hpp"

namespace phihom {

// Largest grid for which a full eigendecomposition is considered affordable.
inline constexpr int kEigenBudget = 96;

// Admissible oscillation scales on a grid: eps = 1/N with N dividing n+1 and
// at least two grid points per period. Throws InvalidInput otherwise.
void check_commensurate(const DomainGrid& grid, double eps);
std::vector<double> admissible_epsilons(const DomainGrid& grid);

// Divergence-form elliptic operator L = div(a(./eps) grad .) on the unit
// square with homogeneous Dirichlet boundary, finite-volume discretised:
// 5-point stencil with half-edge harmonic averages of the diagonal entries,
// plus a symmetric cell-centre cross term when a12 is present. Negative
// definite, symmetric. Copyable handle; caches (eigendecomposition, shifted
// factorisations) are shared across copies and thread-safe.
class OperatorHandle {
 public:
  // eps > 0: oscillatory coefficients a(x/eps) (commensurability enforced);
  // eps = 0: homogenised constant coefficients obtained from the cell
  //          problem at the coefficient's own resolution.
  static OperatorHandle assemble(const DomainGrid& grid, const PeriodicCoefficient& a,
                                 double eps);
  static OperatorHandle assemble_constant(const DomainGrid& grid, const Eigen::Matrix2d& a);

  const DomainGrid& grid() const;
  double epsilon() const;
  const Eigen::SparseMatrix<double>& matrix() const;  // L itself

  // Full eigendecomposition of L (lazy, cached). Grids beyond kEigenBudget
  // are rejected with InvalidInput.
  bool within_eigen_budget() const;
  const Eigen::VectorXd& eigenvalues() const;   // ascending (most negative first)
  const Eigen::MatrixXd& eigenvectors() const;  // orthonormal columns

  // e^{tL} f: eigenbasis route within budget, Crank-Nicolson sub-stepping
  // beyond it. t >= 0 required.
  Eigen::VectorXd apply_semigroup(double t, const Eigen::VectorXd& f) const;

  // (I - c L)^{-1} rhs through a cached sparse Cholesky factorisation keyed
  // by the exact bits of c > 0.
  Eigen::VectorXd solve_shifted(double c, const Eigen::VectorXd& rhs) const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// Green function column G(t; ., y) = (e^{tL} delta_y)(.) with the discrete
// delta h^{-2} at node (iy, jy).
ScalarField green_column(const OperatorHandle& op, double t, int iy, int jy);

// Dense Green kernel K(x, y) = (V e^{t Lambda} V^T)_{xy} / h^2, t > 0. Column
// y equals green_column at y. Requires the eigendecomposition, so the grid
// budget applies. Size n^2 x n^2 -- 126 MB at n = 63; callers on a ladder
// should reuse kernels rather than recompute them.
Eigen::MatrixXd green_kernel(const OperatorHandle& op, double t);

// Kernel statistics at one time against the heat-kernel shape bounds:
//   pointwise_stat  = max |G_eps| (sqrt(t) + |x-y|)^2
//   gradient_stat   = max |D_x G_eps| (sqrt(t) + |x-y|)^3   (first differences)
//   difference_stat = max |G_eps - G_0| (|x-y| + sqrt(t))^3 / sqrt(eps)
// plus sub-Markov mass, negativity and symmetry defects of G_eps.
struct GreenBoundsRow {
  double eps = 0.0;
  double t = 0.0;
  double pointwise_stat = 0.0;
  double gradient_stat = 0.0;
  double difference_stat = 0.0;
  double mass_max = 0.0;         // max over x of sum_y G(x,y) h^2
  double min_value = 0.0;        // most negative kernel entry
  double max_value = 0.0;
  double symmetry_defect = 0.0;  // max |G - G^T| / max |G|
};

GreenBoundsRow verify_green_bounds(const OperatorHandle& op_eps, const OperatorHandle& op_zero,
                                   double t);

// Same statistics from precomputed kernels (`eps` only scales the difference
// statistic; pass 0 to disable it).
GreenBoundsRow verify_green_bounds(const DomainGrid& grid, double eps, double t,
                                   const Eigen::MatrixXd& kernel_eps,
                                   const Eigen::MatrixXd& kernel_zero);

// L^2 -> L^2 operator norm of e^{tA} - e^{tB}.  The difference is symmetric,
// so the norm is its extreme eigenvalue magnitude, estimated by Lanczos with
// full reorthogonalisation (few iterations even when the top of the spectrum
// is clustered, which keeps the matrix-free route affordable).
struct OperatorNormResult {
  double norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

OperatorNormResult semigroup_difference_norm(const OperatorHandle& a, const OperatorHandle& b,
                                             double t, double tol = 1e-6,
                                             int max_iterations = 60);

// Sum over all grid edges (boundary ones included, outside value 0) of the
// squared difference: the discrete Dirichlet energy int |grad u|^2 dx.
double dirichlet_gradient_energy(const ScalarField& u);

}  // namespace phihom
