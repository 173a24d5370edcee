#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phihom/grid.hpp"

namespace phihom {

// Mother bump: phi(z) = e * exp(-1/(1 - |z|^2)) for |z| < 1, else 0.
// Radial, smooth, supported on the unit disc, peak value 1 at the origin.
double mother_bump(double z1, double z2);

// Scaled test functions phi_x^lambda(y) = lambda^{-2} phi((y - x)/lambda) on a
// dyadic scale ladder. One mother bump only: this under-estimates the
// sup-over-phi norm by a fixed equivalence factor, which cancels in every
// like-with-like rate comparison.
struct TestFamily {
  struct Centre {
    int i = 0, j = 0;
  };

  DomainGrid grid;
  std::vector<double> scales;                // dyadic lambda, largest first
  std::vector<std::vector<Centre>> centres;  // per scale, lambda/2-spaced nodes

  // lambda in {1/2, 1/4, ...} down to lambda_min >= 4h; centres on a
  // lambda/2-spaced node subgrid with supp(phi_x^lambda) inside the closed
  // square. Scales with no admissible centre are dropped.
  static TestFamily dyadic(const DomainGrid& grid);

  bool empty() const;
};

// <f, phi_x^lambda> with h^2 quadrature weights. The support must lie inside
// the domain: x +- lambda within [0, 1] on both axes.
double pair_with_test(const ScalarField& f, double x1, double x2, double lambda);

struct BesovEstimate {
  double alpha = 0.0;
  double value = 0.0;
  double argmax_x1 = 0.0, argmax_x2 = 0.0;
  double argmax_lambda = 0.0;
};

// Negative-Holder estimate: max over the family of lambda^{-alpha} |<f, phi_x^lambda>|.
BesovEstimate neg_holder_norm(const ScalarField& f, double alpha, const TestFamily& family);

// Precomputed Gagliardo quadrature kernel h^4 / |x_i - x_j|^{2 + s q} for the
// W^{s,q} seminorm on a fixed grid (N^2 doubles -- build once per grid).
class GagliardoKernel {
 public:
  GagliardoKernel(const DomainGrid& grid, double s, double q);

  const DomainGrid& grid() const { return grid_; }
  double s() const { return s_; }
  double q() const { return q_; }

  // [f]_{W^{s,q}}^q = sum_{i != j} |f_i - f_j|^q K_ij.
  double seminorm_pow(const ScalarField& f) const;
  // Seminorm of a difference of path frames without materialising the field.
  double seminorm_pow(const Eigen::VectorXd& values) const;

 private:
  DomainGrid grid_;
  double s_ = 0.0, q_ = 0.0;
  Eigen::MatrixXd kernel_;
};

// (||f||_{L^q}^q + [f]^q)^{1/q}.
double fractional_sobolev_norm(const ScalarField& f, const GagliardoKernel& kernel);

struct InequalityReport {
  std::string name;
  double alpha = 0.0;
  double q = 0.0;
  int samples = 0;
  double max_ratio = 0.0;
  double min_ratio = 0.0;
  bool all_finite = true;
  std::vector<double> ratios;
};

// Empirical constant for ||f||_{B^alpha_{1,1}} <~ ||grad f||_{L1}^alpha
// ||f||_{L1}^{1-alpha} + ||f||_{L1}, with the Besov side proxied by dyadic
// scale-weighted averaged differences. alpha in (0, 1).
InequalityReport verify_B11_interpolation(const std::vector<ScalarField>& fields, double alpha);

// Empirical constant for ||f||_{W^{alpha,q}} <~ ||f||_{W^{1,q}}^alpha
// ||f||_{L^q}^{1-alpha}, Gagliardo quadrature on the left. alpha in (0, 1),
// q >= 1.
InequalityReport verify_fractional_GN(const std::vector<ScalarField>& fields, double alpha,
                                      double q);

// CSV rows "alpha,value,argmax_x,argmax_y,argmax_lambda" for a batch of
// estimates.
void export_besov_csv(const std::vector<BesovEstimate>& estimates, const std::string& path);

}  // namespace phihom
