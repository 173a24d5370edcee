#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phihom/errors.hpp"

namespace phihom {

// Symmetric uniformly elliptic coefficient field on the periodic unit cell
// [0,1)^2, sampled on an M x M node grid (node (i,j) at y = (i/M, j/M));
// entries (a11, a12, a22) per node. Evaluation between nodes is bilinear
// with periodic wrap, which preserves the ellipticity bracket (convex
// combinations of symmetric matrices keep eigenvalue bounds).
class PeriodicCoefficient {
 public:
  PeriodicCoefficient(int resolution, Eigen::VectorXd a11, Eigen::VectorXd a12,
                      Eigen::VectorXd a22, std::string preset);

  int resolution() const { return m_; }
  const std::string& preset() const { return preset_; }

  int index(int i, int j) const { return j * m_ + i; }
  Eigen::Matrix2d at(int i, int j) const;
  double a11(int i, int j) const { return a11_[index(i, j)]; }
  double a12(int i, int j) const { return a12_[index(i, j)]; }
  double a22(int i, int j) const { return a22_[index(i, j)]; }

  // Smallest / largest eigenvalue of a over all cell nodes.
  double ellipticity_lower() const { return ell_lo_; }
  double ellipticity_upper() const { return ell_hi_; }

  bool is_diagonal() const { return diagonal_; }
  bool is_constant() const { return constant_; }

  // Bilinear periodic evaluation at cell coordinates (y1, y2) in R^2.
  Eigen::Matrix2d evaluate(double y1, double y2) const;

  // Cell average of det(a(y))^{-1/2} (nodal quadrature).
  double mean_inverse_sqrt_det() const;

  // Arithmetic nodal mean of a, and inverse of the nodal mean of a^{-1}.
  Eigen::Matrix2d arithmetic_mean() const;
  Eigen::Matrix2d harmonic_mean() const;

 private:
  int m_;
  Eigen::VectorXd a11_, a12_, a22_;
  std::string preset_;
  double ell_lo_ = 0.0, ell_hi_ = 0.0;
  bool diagonal_ = false, constant_ = false;
};

// Presets. All produce exactly representable nodal fields.
PeriodicCoefficient make_constant(const Eigen::Matrix2d& a);
PeriodicCoefficient make_laminate(int axis, double low, double high, int resolution);
PeriodicCoefficient make_smooth_checker(double contrast, int resolution);
PeriodicCoefficient make_user_table(int resolution, const std::vector<Eigen::Matrix2d>& values);

// CSV user table: one row per cell node in index order (j outer, i inner),
// columns a11,a12,a22.
PeriodicCoefficient load_coefficient_csv(const std::string& path);

// a(x/eps) at spatial point x = (x1, x2); eps > 0 required.
Eigen::Matrix2d evaluate_scaled(const PeriodicCoefficient& a, double eps, double x1, double x2);

}  // namespace phihom
