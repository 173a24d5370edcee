#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "phihom/cell.hpp"
#include "phihom/coefficient.hpp"
#include "phihom/gaussian.hpp"
#include "phihom/grid.hpp"
#include "phihom/operators.hpp"

namespace phihom {

// Everything a convergence experiment needs, defaulted at desk scale.
struct ExperimentConfig {
  // coefficient field
  std::string preset = "laminate";  // constant | laminate | checker | csv
  int laminate_axis = 1;
  double laminate_low = 1.0;
  double laminate_high = 4.0;
  double constant_a11 = 1.0;
  double constant_a12 = 0.0;
  double constant_a22 = 1.0;
  double checker_contrast = 4.0;
  std::string coefficient_csv;
  int cell_resolution = 128;

  // discretisation and ladders
  int grid_n = 63;
  std::vector<double> eps_ladder = {0.25, 0.125, 0.0625, 0.03125};
  std::vector<double> delta_ladder = {0.125, 0.0625, 0.03125, 0.015625, 0.0078125};

  // stochastic statistics
  std::vector<int> m_orders = {2, 3};
  int realisations = 50;
  std::uint64_t seed = 1;

  // dynamics
  int n_deg = 2;
  double t_end = 1.0;
  double dt = 1e-3;
  double burn_in = 1.0;
  double kappa = 0.02;
  double beta = 0.05;
  double sobolev_p = 8.0;
  int statistic_stride = 10;

  // semigroup experiment
  double t_semigroup = 0.25;

  // plumbing (out_dir never enters the config hash)
  std::string out_dir = "out";
  int threads = 0;  // 0 = leave the BLAS default
};

PeriodicCoefficient experiment_coefficient(const ExperimentConfig& config);

// Sorted "key = value" lines covering every output-affecting field; the
// config hash is FNV-1a over these bytes.
std::string canonical_config(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);

// The canonical key/value pairs behind canonical_config, sorted by key.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& config);

// Applies one canonical key; numeric values accept fractions like "1/4".
// Unknown keys raise InvalidInput listing the valid set.
void apply_config_entry(ExperimentConfig& config, const std::string& key,
                        const std::string& value);

enum class RateModel { kPurePower, kPowerLog };

struct RateFit {
  double slope = 0.0;
  double ci_half_width = 0.0;  // 95% two-sided on the slope
  double intercept = 0.0;
  double r_squared = 0.0;
  int points_used = 0;
  bool zeros_excluded = false;
};

// Least squares of log(value) against log(eps) (pure power) or
// log(eps |log eps|) (power-log); needs >= 3 positive points.
RateFit fit_rate(const std::vector<std::pair<double, double>>& points, RateModel model);

struct RungStat {
  double eps = 0.0;
  double value = 0.0;
  double std_error = 0.0;
  int samples = 1;
  double extra = 0.0;  // experiment-specific companion column
};

struct ConvergenceReport {
  std::string name;
  std::string extra_label;  // empty when the extra column is unused
  std::vector<RungStat> rungs;
  RateFit fit;
  double target_exponent = 0.0;
  bool passed = false;
  int quarantined = 0;  // realisations dropped after numerical failures
};

// Shared ladder state: one grid, one coefficient, an operator per rung plus
// the homogenised anchor (eps = 0), eigendecompositions cached inside the
// handles, the cell solve done once, and the anchor covariance computed on
// first use.
class LadderContext {
 public:
  LadderContext(const PeriodicCoefficient& a, int grid_n, std::vector<double> eps_ladder);

  const DomainGrid& grid() const;
  const PeriodicCoefficient& coefficient() const;
  const std::vector<double>& ladder() const;
  const OperatorHandle& op(double eps) const;  // eps = 0 is always available
  const HomogenisedMatrix& homogenised() const;
  const CovarianceKernel& anchor_covariance() const;

 private:
  struct State;
  std::shared_ptr<State> state_;
};

// L2 -> L2 norm of exp(tL_eps) - exp(tL_0) per rung at fixed t; pure-power
// fit, target exponent 1.
ConvergenceReport run_semigroup_difference(const LadderContext& ctx, double t);

// L2(DxD) distance of the stationary covariances per rung; pure-power fit
// against the eps |log eps| prediction, passing at slope >= 0.75 with a
// monotone ladder.
ConvergenceReport run_rho_difference(const LadderContext& ctx);

// Exact-kernel second moment of <psi_eps^{wick m} - psi_0^{wick m}, f> per
// rung and order; target exponent 1 - kappa, passing at slope >= 0.7.
std::vector<ConvergenceReport> run_wick_convergence(const LadderContext& ctx,
                                                    const std::vector<int>& m_orders,
                                                    const ScalarField& test_function,
                                                    double kappa);

// Smooth bump centred in the domain, the fixed pairing function for the
// Wick experiments.
ScalarField default_test_function(const DomainGrid& grid);

struct LogLinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

struct RenormalisationReport {
  double eps = 0.0;
  std::vector<double> deltas;
  std::vector<double> mean_profile;     // spatial mean of the exact profile C(delta)
  std::vector<double> mean_comparison;  // spatial mean of the comparison profile
  LogLinearFit profile_fit;             // mean against |log delta|
  LogLinearFit comparison_fit;
  double slope_ratio = 0.0;
  double predicted_ratio = 0.0;  // sqrt(det a_hat) * cell mean of det(a)^{-1/2}
};

// The two renormalisation constants along the delta ladder at the smallest
// rung: both means grow linearly in |log delta| and their slopes differ by
// the predicted homogenisation ratio.
RenormalisationReport run_renormalisation_divergence(const LadderContext& ctx,
                                                     const std::vector<double>& deltas);

// Coupled-noise end-to-end ladder: one noise realisation drives every rung
// including eps = 0; the rung statistic is the ensemble mean over
// realisations of sup_t t^{(1+beta)/2} ||u_eps(t) - u_0(t)||_{W^{s,p}} with
// s = 1 - kappa, p = sobolev_p.  The extra column reports the path-level
// sup_t C^{-kappa} distance of the order-2 Wick powers on realisation 0.
ConvergenceReport run_full_convergence(const ExperimentConfig& config);

// Same suite on an existing ladder context, reusing its cached cell solve
// and eigendecompositions; the context's rungs take precedence over
// config.eps_ladder.
ConvergenceReport run_full_convergence(const LadderContext& ctx, const ExperimentConfig& config);

// Reproducibility manifest; wall_clock_utc is the only field the config
// hash ignores.
struct RunManifest {
  std::uint64_t hash = 0;
  std::string version;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string wall_clock_utc;
  std::vector<std::string> defaults_applied;
  std::map<std::string, std::string> tolerances;
  ExperimentConfig config;
};

RunManifest make_manifest(const ExperimentConfig& config,
                          std::vector<std::string> defaults_applied);

// Writes manifest.json, report.json, and one CSV per report into dir
// (created if missing).  Reports named wick-m<k>, rho-difference,
// semigroup-difference, full-convergence map to wick_m<k>.csv,
// rho_diff.csv, semigroup_diff.csv, full_convergence.csv; a renormalisation
// report adds renorm_div.csv.
void persist_report(const std::vector<ConvergenceReport>& reports,
                    const RenormalisationReport* renorm, const RunManifest& manifest,
                    const std::string& dir);

// Reads manifest.json back; the stored hash must match the hash recomputed
// from the restored config.
RunManifest load_manifest(const std::string& dir);

}  // namespace phihom
