#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "phihom/coefficient.hpp"
#include "phihom/grid.hpp"
#include "phihom/noise.hpp"
#include "phihom/operators.hpp"

namespace phihom {

// Mollification request for covariance-level objects. Only the heat-kernel
// method acts on covariances (the time profile is a noise-array ablation).
struct Mollification {
  double delta = 0.0;
  MollifyMethod method = MollifyMethod::kHeatKernel;
};

// Stationary covariance rho_{eps1,eps2}(x, y) of the linear solutions driven
// by one shared noise; (field amplitude)^2 units.
struct CovarianceKernel {
  double eps1 = 0.0, eps2 = 0.0;
  DomainGrid grid;
  double delta = 0.0;  // 0 = unmollified (the grid is the UV cutoff)
  std::string method;  // "lyapunov-exact" | "monte-carlo" | "loaded"
  Eigen::MatrixXd matrix;
};

// C(x): the renormalisation profile (a variance per node).
struct RenormalisationProfile {
  DomainGrid grid;
  double delta = 0.0;
  double epsilon = 0.0;
  std::string method;  // "lyapunov-exact" | "comparison" | "monte-carlo"
  double scale = 0.0;  // comparison profiles: the fitted s(delta); else 0
  Eigen::VectorXd values;
};

struct WickPowerField {
  int order = 0;
  ScalarField values;
};

// Per-mode stationary weight mu(delta^2 lambda)^2 / (2 |lambda| h2), the
// eigenbasis symbol of the stationary covariance; h2 is the node volume.
double stationary_mode_weight(double lambda, double h2,
                              const std::optional<Mollification>& moll = {});

// mu(z) = e^{z} * integral rho(s) e^{s z} ds at z = delta^2 lambda <= 0:
// the combined heat-kernel + time-profile damping of one mode, evaluated
// stably as integral rho(s) e^{(1+s) z} ds. mu(0) = 1, mu -> 0 as z -> -inf.
double mollifier_symbol(double z);

// Sigma = (-2L)^{-1} / h^2 in white-noise normalisation; with mollification
// the eigenbasis weights pick up mu^2. Needs the eigendecomposition.
CovarianceKernel stationary_covariance(const OperatorHandle& L,
                                       const std::optional<Mollification>& moll = {});

// Diagonal of stationary_covariance without materialising the kernel
// (O(N^2) instead of O(N^3); the workhorse for delta ladders).
RenormalisationProfile stationary_variance_profile(const OperatorHandle& L,
                                                   const std::optional<Mollification>& moll = {});

// rho_{eps1,eps2} for two operators on one grid driven by the SAME noise:
// coupled Lyapunov relation solved in the two eigenbases.
CovarianceKernel cross_covariance(const OperatorHandle& L1, const OperatorHandle& L2,
                                  const std::optional<Mollification>& moll = {});

// Gaussian field with covariance sigma via symmetric factorisation; a ridge
// of 1e-12 * trace is tried once before failing. Deterministic in
// (seed, draw).
ScalarField sample_stationary(const CovarianceKernel& sigma, std::uint64_t seed,
                              std::uint64_t draw = 0);

// Factors the covariance once and hands out independent draws; draw(seed, r)
// is bit-identical to sample_stationary(sigma, seed, r).
class StationarySampler {
 public:
  explicit StationarySampler(const CovarianceKernel& sigma);
  const DomainGrid& grid() const { return grid_; }
  ScalarField draw(std::uint64_t seed, std::uint64_t index) const;

 private:
  DomainGrid grid_;
  Eigen::MatrixXd chol_;
};

// Semi-implicit linear evolution psi_{k+1} = (I - dt L)^{-1}(psi_k + dt xi_k)
// from the state psi0 at xi's start time; when that start time is negative
// the march runs through the burn-in window and only the frames on
// [0, t_end] are returned.  xi must cover [0, t_end] on the matching step.
FieldPath evolve_linear(const OperatorHandle& L, const ScalarField& psi0,
                        const NoiseRealisation& xi, double t_end);
// Same recursion fed by explicit increment columns starting at time t0.
FieldPath evolve_linear(const OperatorHandle& L, const ScalarField& psi0,
                        const Eigen::MatrixXd& increments, double dt, double t0, double t_end);
// Final frame only (constant memory).
ScalarField evolve_linear_final(const OperatorHandle& L, const ScalarField& psi0,
                                const NoiseRealisation& xi, double t_end);

// C(x) = sigma(x, x); requires eps1 = eps2.
RenormalisationProfile renormalisation_constant(const CovarianceKernel& sigma);

// Comparison profile from the coefficient determinant:
//   C~(x) = s(delta) det(a(x/eps))^{-1/2},
// with s(delta) = sqrt(det a_hat) * mean(C_0^(delta)) anchored through the
// homogenised operator op_zero (pass the handle to reuse its cached
// eigendecomposition across a delta ladder).
RenormalisationProfile comparison_profile(const PeriodicCoefficient& a, double eps, double delta,
                                          const OperatorHandle& op_zero);
RenormalisationProfile comparison_profile(const DomainGrid& grid, const PeriodicCoefficient& a,
                                          double eps, double delta);

// Variance-parameterised Hermite polynomial H_m(x; c):
// H_0 = 1, H_1 = x, H_{m+1} = x H_m - m c H_{m-1}.
double hermite(int m, double x, double c);

// Nodewise H_m(psi(x); C(x)); orders 0..7 supported.
WickPowerField wick_power(const ScalarField& psi, int m, const RenormalisationProfile& c);

// m! * double integral f(x) g(y) rho(x,y)^m dx dy: the Wick-formula target
// for E<psi1^{wick m}, f><psi2^{wick m}, g>.
double wick_moment_oracle(int m, const CovarianceKernel& rho, const ScalarField& f,
                          const ScalarField& g);

// Binary kernel dump: a type byte 'K', then (n, eps1, eps2, delta) as
// little-endian 64-bit fields, then the matrix row-major as raw doubles.
void dump_kernel(const CovarianceKernel& kernel, const std::string& path);
CovarianceKernel load_kernel(const std::string& path);

// CSV profile export: header "i,j,value", one row per node.
void export_profile_csv(const RenormalisationProfile& profile, const std::string& path);

}  // namespace phihom
