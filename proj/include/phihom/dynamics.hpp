#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "phihom/gaussian.hpp"
#include "phihom/grid.hpp"
#include "phihom/operators.hpp"

namespace phihom {

// Forcing fields g^(k)(t), k = 0..2n-1: the Wick power of order 2n-1-k of
// psi(t) + (drift from u0), evaluated on the march time grid.  The top index
// g^(2n-1) is the order-zero power, identically one.
struct ForcingSet {
  int n_deg = 0;  // half-degree n; the equation degree is 2n-1
  DomainGrid grid;
  double dt = 0.0;
  double t0 = 0.0;
  std::vector<Eigen::MatrixXd> g;  // g[k] has grid.size() rows, steps+1 columns
  std::string provenance;

  int steps() const { return g.empty() ? 0 : static_cast<int>(g.front().cols()) - 1; }
  double time(int j) const { return t0 + j * dt; }
};

// Evaluate all forcing levels along psi's time grid.  The deterministic
// shift exp(tL)u0 is marched with the same backward-Euler step as the
// remainder solver so the discrete solution is internally consistent; the
// Wick correction uses the profile C of the Gaussian part only.
ForcingSet build_forcings(const FieldPath& psi, const ScalarField& u0, const OperatorHandle& L,
                          const RenormalisationProfile& C, int n_deg);

// Remainder path Y(t) with Y(0) = 0 and zero boundary values throughout.
struct RemainderPath {
  DomainGrid grid;
  double dt = 0.0;
  double epsilon = 0.0;
  int n_deg = 0;
  Eigen::MatrixXd y;  // grid.size() rows, steps+1 columns; column 0 is zero
  double x_tau = 0.0;  // sup over time of max|Y| + max|grad Y|
  std::string forcing_meta;

  int steps() const { return static_cast<int>(y.cols()) - 1; }
  double time(int j) const { return j * dt; }
  ScalarField frame(int j) const { return ScalarField::from_vector(grid, y.col(j)); }
};

// Semi-implicit march of
//   dY/dt = L Y - sum_k binom(2n-1, k) g^(k) Y^k,   Y(0) = 0,
// with the stiff linear part implicit and the forcing averaged over each
// step (half-step evaluation tames the t -> 0 weight of the forcings).
// Any nodewise |Y| above 1e6 aborts with a time-stamped error.
RemainderPath solve_remainder(const OperatorHandle& L, const ForcingSet& forcings, int n_deg,
                              double t_end, double dt);

// phi(t) = psi(t) + drift(t) + Y(t), with the same marched drift as the
// forcings.
FieldPath assemble_solution(const FieldPath& psi, const ScalarField& u0, const OperatorHandle& L,
                            const RemainderPath& y);

// u(t) = drift(t) + Y(t); the quantity the convergence theory compares.
FieldPath assemble_remainder(const ScalarField& u0, const OperatorHandle& L,
                             const RemainderPath& y);

struct EnergyRow {
  double t = 0.0;
  int m = 0;
  double lp_pow = 0.0;        // ||u(t)||_{2m}^{2m}
  double grad_energy = 0.0;   // discrete ||grad(u^m)||_2^2
  double weighted = 0.0;      // t^{m/(n-1)} ||u(t)||_{2m}^{2m}
};

struct EnergyDiagnostics {
  int n_deg = 0;
  std::vector<int> m_list;
  std::vector<EnergyRow> rows;            // time-major, then m in m_list order
  std::vector<double> sup_weighted;       // per m: sup over time of weighted
  double x_tau = 0.0;                     // sup_t ( max|u| + max|grad u| )
  double forcing_diag = -1.0;             // max_k sup_t t^{1/5} |g^(k)|_{C^{-kappa}};
                                          // negative when no forcings were given
};

// Per-time moment and gradient-energy table for a solution path, plus the
// path-level sup diagnostics.  When a forcing set and kappa > 0 are supplied
// the negative-Holder forcing diagnostic is evaluated as well (reported,
// never thresholded).
EnergyDiagnostics energy_diagnostics(const FieldPath& u, const std::vector<int>& m_list, int n_deg,
                                     const ForcingSet* forcings = nullptr, double kappa = 0.0);

// CSV rows: t,m,value,weighted_value.
void export_diagnostics_csv(const EnergyDiagnostics& diag, const std::string& path);

// Binary path dump: type byte 'P', then n, dt, t0, steps, then the frames in
// time order.  Little-endian, same conventions as the noise dump.
void dump_path(const FieldPath& path, std::ostream& out);
FieldPath load_path(std::istream& in);

}  // namespace phihom
