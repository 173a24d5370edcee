#pragma once

#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "phihom/coefficient.hpp"

namespace phihom {

// Correctors chi_1, chi_2 of the periodic cell problem
//   div( a (e_k + grad chi_k) ) = 0 on the unit torus,  mean(chi_k) = 0,
// discretised by finite volumes on the coefficient's own node grid with
// harmonic averaging of the diagonal entries at half-edges (plus a symmetric
// cell-centre cross term when a12 is present), solved by Jacobi-preconditioned
// CG with a mean-zero projection each iteration.
struct Corrector {
  int resolution = 0;
  Eigen::VectorXd chi1, chi2;            // mean-zero nodal values
  double relative_residual1 = 0.0;       // ||A chi - b|| / ||b|| at exit
  double relative_residual2 = 0.0;
  std::vector<double> residual_history1; // one entry per CG iteration
  std::vector<double> residual_history2;
};

struct HomogenisedMatrix {
  Eigen::Matrix2d a_hat = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d voigt = Eigen::Matrix2d::Zero();  // arithmetic nodal mean (upper bound)
  Eigen::Matrix2d reuss = Eigen::Matrix2d::Zero();  // harmonic nodal mean (lower bound)
  double asymmetry = 0.0;  // |a21 - a12| / max|a| before symmetrisation
};

// Discrete bilinear form of the cell problem as a sparse matrix (symmetric
// positive semidefinite, kernel = constants) together with the two
// right-hand sides. Exposed for tests.
struct CellSystem {
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b1, b2;
};

CellSystem build_cell_system(const PeriodicCoefficient& a);

Corrector solve_corrector(const PeriodicCoefficient& a, double tol = 1e-10,
                          int max_iterations = 0 /* 0 -> 40 * M^2 cap */);

// Cell average of a (I + grad chi) evaluated through the same edge/centre
// quadrature as the discrete energy, symmetrised; Voigt-Reuss bracket
// computed alongside. Throws NumericalError if a_hat fails to be SPD or
// violates the bracket beyond round-off.
HomogenisedMatrix homogenised_matrix(const PeriodicCoefficient& a, const Corrector& chi);

// Relative L2 residual of the discrete cell PDE for corrector k (1 or 2).
double corrector_residual(const PeriodicCoefficient& a, const Corrector& chi, int k);

}  // namespace phihom
