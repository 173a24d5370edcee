// Acceptance harness: eleven numbered criteria covering the cell problem,
// semigroup and covariance convergence, Wick calculus, renormalisation
// divergence, the remainder solver, and end-to-end reproducibility.  Each
// criterion prints exactly one [PASS]/[FAIL] line; any failure makes the
// process exit nonzero.  Always compiled with the checks on.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "phihom/bench.hpp"
#include "phihom/besov.hpp"
#include "phihom/cell.hpp"
#include "phihom/coefficient.hpp"
#include "phihom/config.hpp"
#include "phihom/dynamics.hpp"
#include "phihom/errors.hpp"
#include "phihom/gaussian.hpp"
#include "phihom/grid.hpp"
#include "phihom/noise.hpp"
#include "phihom/operators.hpp"
#include "phihom/util.hpp"

namespace {

using namespace phihom;

int failures = 0;

void criterion(int k, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s\n", ok ? "PASS" : "FAIL", k, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void criterion_threw(int k, const std::string& what) {
  criterion(k, false, "unexpected exception: " + what);
}

double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double min_eigenvalue(const Eigen::Matrix2d& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(0.5 * (m + m.transpose()));
  return es.eigenvalues().minCoeff();
}

// ---------------------------------------------------------------------------
// Deterministic reduction helpers (psi = 0, C = 0): the remainder modules
// then march du/dt = L u - u^(2n-1) exactly, which gives an independent
// reference point for the solver criteria.

FieldPath zero_path(const DomainGrid& grid, double dt, int steps) {
  FieldPath path;
  path.grid = grid;
  path.t0 = 0.0;
  path.dt = dt;
  path.frames = Eigen::MatrixXd::Zero(grid.size(), steps + 1);
  return path;
}

RenormalisationProfile zero_profile(const DomainGrid& grid) {
  RenormalisationProfile c;
  c.grid = grid;
  c.method = "zero";
  c.values = Eigen::VectorXd::Zero(grid.size());
  return c;
}

FieldPath march_reduction(const OperatorHandle& op, const ScalarField& u0, int n_deg,
                          double t_end, double dt) {
  const int steps = static_cast<int>(std::lround(t_end / dt));
  const FieldPath psi = zero_path(op.grid(), dt, steps);
  const ForcingSet forcings = build_forcings(psi, u0, op, zero_profile(op.grid()), n_deg);
  const RemainderPath y = solve_remainder(op, forcings, n_deg, t_end, dt);
  return assemble_remainder(u0, op, y);
}

ScalarField centred_bump(const DomainGrid& grid, double scale, double amplitude) {
  ScalarField f = ScalarField::zero(grid);
  for (int j = 0; j < grid.n; ++j) {
    for (int i = 0; i < grid.n; ++i) {
      f.at(i, j) =
          amplitude * mother_bump((grid.coord(i) - 0.5) / scale, (grid.coord(j) - 0.5) / scale);
    }
  }
  return f;
}

// Classical RK4 on du/dt = L u - u^3 recording the frames at record_times
// (each must be a multiple of dt).
std::vector<Eigen::VectorXd> rk4_reference(const OperatorHandle& op, const ScalarField& u0,
                                           double t_end, double dt,
                                           const std::vector<double>& record_times) {
  const Eigen::SparseMatrix<double>& L = op.matrix();
  auto rhs = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd {
    return L * u - u.array().cube().matrix();
  };
  std::vector<Eigen::VectorXd> frames;
  std::size_t next = 0;
  Eigen::VectorXd u = u0.values;
  const int steps = static_cast<int>(std::lround(t_end / dt));
  for (int j = 0; j <= steps; ++j) {
    const double t = j * dt;
    if (next < record_times.size() && std::abs(t - record_times[next]) < 0.5 * dt) {
      frames.push_back(u);
      ++next;
    }
    if (j == steps) break;
    const Eigen::VectorXd k1 = rhs(u);
    const Eigen::VectorXd k2 = rhs(u + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = rhs(u + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = rhs(u + dt * k3);
    u += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return frames;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---------------------------------------------------------------------------

void criterion_1_cell_oracle() {
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const PeriodicCoefficient lam = make_laminate(1, 1.0, 4.0, 128);
    const HomogenisedMatrix hm = homogenised_matrix(lam, solve_corrector(lam));
    const bool lam_ok = rel_err(hm.a_hat(0, 0), 1.6) <= 1e-3 &&
                        rel_err(hm.a_hat(1, 1), 2.5) <= 1e-3 &&
                        std::abs(hm.a_hat(0, 1)) <= 1e-6 && std::abs(hm.a_hat(1, 0)) <= 1e-6;

    Eigen::Matrix2d c;
    c << 2.0, 0.3, 0.3, 1.5;
    const PeriodicCoefficient con = make_constant(c);
    const Corrector chi = solve_corrector(con);
    const HomogenisedMatrix hc = homogenised_matrix(con, chi);
    const bool con_ok = (hc.a_hat - c).cwiseAbs().maxCoeff() <= 1e-10 &&
                        chi.chi1.cwiseAbs().maxCoeff() <= 1e-10 &&
                        chi.chi2.cwiseAbs().maxCoeff() <= 1e-10;
    const double elapsed = seconds_since(t0);
    criterion(1, lam_ok && con_ok && elapsed < 10.0,
              fmt("homogenised-matrix oracles: laminate a_hat = diag(%.6f, %.6f) vs (1.6, 2.5), "
                  "constant defect %.2e, corrector max %.2e, %.1f s",
                  hm.a_hat(0, 0), hm.a_hat(1, 1), (hc.a_hat - c).cwiseAbs().maxCoeff(),
                  std::max(chi.chi1.cwiseAbs().maxCoeff(), chi.chi2.cwiseAbs().maxCoeff()),
                  elapsed));
  } catch (const std::exception& e) {
    criterion_threw(1, e.what());
  }
}

void criterion_2_voigt_reuss() {
  try {
    Eigen::Matrix2d c;
    c << 2.0, 0.3, 0.3, 1.5;
    const std::filesystem::path csv = std::filesystem::temp_directory_path() / "accept_coeff.csv";
    {
      std::ofstream out(csv);
      const int m = 32;
      out.precision(17);
      for (int j = 0; j < m; ++j) {
        for (int i = 0; i < m; ++i) {
          const double y1 = (i + 0.5) / m, y2 = (j + 0.5) / m;
          const double a11 = 2.0 + 0.5 * std::sin(2.0 * M_PI * y1);
          const double a22 = 1.5 + 0.5 * std::cos(2.0 * M_PI * y2);
          const double a12 = 0.2 * std::sin(2.0 * M_PI * y1) * std::sin(2.0 * M_PI * y2);
          out << a11 << ',' << a12 << ',' << a22 << '\n';
        }
      }
    }
    const std::vector<std::pair<std::string, PeriodicCoefficient>> presets = {
        {"constant", make_constant(c)},
        {"laminate", make_laminate(1, 1.0, 4.0, 128)},
        {"checker", make_smooth_checker(4.0, 128)},
        {"csv", load_coefficient_csv(csv.string())},
    };
    bool ok = true;
    double worst = 0.0;
    std::string worst_name = "none";
    for (const auto& [name, a] : presets) {
      const HomogenisedMatrix hm = homogenised_matrix(a, solve_corrector(a));
      const double scale = hm.voigt.cwiseAbs().maxCoeff();
      const double defect = std::min(min_eigenvalue(hm.voigt - hm.a_hat),
                                     min_eigenvalue(hm.a_hat - hm.reuss));
      if (-defect > worst) {
        worst = -defect;
        worst_name = name;
      }
      ok = ok && defect >= -1e-8 * scale;
    }
    std::filesystem::remove(csv);
    criterion(2, ok,
              fmt("Voigt-Reuss bracket on 4 presets, worst defect %.2e (%s)", worst,
                  worst_name.c_str()));
  } catch (const std::exception& e) {
    criterion_threw(2, e.what());
  }
}

void criterion_3_semigroup(const LadderContext& ctx) {
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const ConvergenceReport report = run_semigroup_difference(ctx, 0.25);
    const double elapsed = seconds_since(t0);
    criterion(3,
              report.fit.points_used >= 3 && report.fit.slope >= 0.75 &&
                  report.fit.slope <= 1.25 && elapsed < 300.0,
              fmt("semigroup difference rate %.3f +- %.3f in [0.75, 1.25] "
                  "(t = 0.25, 64^2, 4 rungs, %.0f s)",
                  report.fit.slope, report.fit.ci_half_width, elapsed));
  } catch (const std::exception& e) {
    criterion_threw(3, e.what());
  }
}

void criterion_4_rho_difference(const LadderContext& ctx) {
  try {
    const ConvergenceReport report = run_rho_difference(ctx);
    bool decreasing = true;
    for (std::size_t i = 0; i + 1 < report.rungs.size(); ++i) {
      decreasing = decreasing && report.rungs[i + 1].value < report.rungs[i].value;
    }
    criterion(4, decreasing && report.fit.points_used >= 3 && report.fit.slope >= 0.75,
              fmt("covariance-kernel distance decreasing with rate %.3f >= 0.75",
                  report.fit.slope));
  } catch (const std::exception& e) {
    criterion_threw(4, e.what());
  }
}

void criterion_5_wick_rate(const LadderContext& ctx) {
  try {
    const std::vector<ConvergenceReport> reports =
        run_wick_convergence(ctx, {2, 3}, default_test_function(ctx.grid()), 0.02);
    const bool rates_ok = reports[0].fit.slope >= 0.7 && reports[1].fit.slope >= 0.7 &&
                          reports[0].fit.points_used >= 3 && reports[1].fit.points_used >= 3;

    // Constant-coefficient control straight through the kernel pipeline
    // (no shortcut): the coupled second moment must cancel to round-off.
    Eigen::Matrix2d c;
    c << 2.0, 0.3, 0.3, 1.5;
    const DomainGrid g15 = DomainGrid::make(15);
    const OperatorHandle ope = OperatorHandle::assemble(g15, make_constant(c), 0.25);
    const OperatorHandle op0 = OperatorHandle::assemble_constant(g15, c);
    const ScalarField f = default_test_function(g15);
    const CovarianceKernel ree = stationary_covariance(ope);
    const CovarianceKernel re0 = cross_covariance(ope, op0);
    const CovarianceKernel r00 = stationary_covariance(op0);
    double control = 0.0;
    double norm = 0.0;
    for (int m : {2, 3}) {
      const double iee = wick_moment_oracle(m, ree, f, f);
      const double ie0 = wick_moment_oracle(m, re0, f, f);
      const double i00 = wick_moment_oracle(m, r00, f, f);
      control = std::max(control, std::abs(iee - 2.0 * ie0 + i00));
      norm = std::max(norm, std::abs(iee));
    }
    criterion(5, rates_ok && control <= 1e-10 * std::max(1.0, norm),
              fmt("Wick-power rates m=2: %.3f, m=3: %.3f (>= 0.7); constant control %.2e",
                  reports[0].fit.slope, reports[1].fit.slope, control));
  } catch (const std::exception& e) {
    criterion_threw(5, e.what());
  }
}

void criterion_6_wick_oracles() {
  try {
    // Scalar chaos: orthogonality and E[H_m^2] = m! C^m over 1e5 draws.
    const int draws = 100000;
    const double cvar = 1.7;
    const double root_c = std::sqrt(cvar);
    std::vector<std::vector<double>> h(5, std::vector<double>(draws));
    for (int i = 0; i < draws; ++i) {
      const double x = root_c * counter_gaussian(42, 7, static_cast<std::uint64_t>(i), 0);
      for (int m = 0; m <= 4; ++m) h[m][i] = hermite(m, x, cvar);
    }
    auto mean_se = [&](const std::vector<double>& v) {
      const double mean = pairwise_sum(v) / draws;
      std::vector<double> sq(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
      const double se = std::sqrt(pairwise_sum(sq) / (draws - 1.0) / draws);
      return std::make_pair(mean, se);
    };
    bool scalar_ok = true;
    double worst_sigma = 0.0;
    double fact = 1.0;
    for (int m = 1; m <= 4; ++m) {
      fact *= m;
      std::vector<double> sq(draws), cross(draws);
      for (int i = 0; i < draws; ++i) {
        sq[i] = h[m][i] * h[m][i];
        cross[i] = h[m][i] * h[m - 1][i];
      }
      const auto [m2, se2] = mean_se(sq);
      const auto [mx, sex] = mean_se(cross);
      const double want = fact * std::pow(cvar, m);
      worst_sigma = std::max(worst_sigma, std::abs(m2 - want) / se2);
      worst_sigma = std::max(worst_sigma, std::abs(mx) / sex);
      scalar_ok = scalar_ok && std::abs(m2 - want) <= 3.0 * se2 && std::abs(mx) <= 3.0 * sex;
    }

    // Field level: Monte Carlo second moment of <psi^{wick m}, f> against
    // the exact-kernel oracle on a 16^2 grid.
    const DomainGrid g15 = DomainGrid::make(15);
    const OperatorHandle op = OperatorHandle::assemble(g15, make_laminate(1, 1.0, 4.0, 128),
                                                       0.125);
    const CovarianceKernel sigma = stationary_covariance(op);
    const RenormalisationProfile prof = renormalisation_constant(sigma);
    const StationarySampler sampler(sigma);
    const ScalarField f = default_test_function(g15);
    const double h2 = g15.h * g15.h;
    const int reps = 4000;
    bool field_ok = true;
    double worst_field_sigma = 0.0;
    for (int m = 1; m <= 3; ++m) {
      std::vector<double> s2(reps);
      for (int r = 0; r < reps; ++r) {
        const ScalarField psi = sampler.draw(99, static_cast<std::uint64_t>(r));
        const WickPowerField wick = wick_power(psi, m, prof);
        const double s = wick.values.values.dot(f.values) * h2;
        s2[r] = s * s;
      }
      const double mean = pairwise_sum(s2) / reps;
      std::vector<double> dev(reps);
      for (int r = 0; r < reps; ++r) dev[r] = (s2[r] - mean) * (s2[r] - mean);
      const double se = std::sqrt(pairwise_sum(dev) / (reps - 1.0) / reps);
      const double oracle = wick_moment_oracle(m, sigma, f, f);
      worst_field_sigma = std::max(worst_field_sigma, std::abs(mean - oracle) / se);
      field_ok = field_ok && std::abs(mean - oracle) <= 3.0 * se;
    }
    criterion(6, scalar_ok && field_ok,
              fmt("Wick calculus oracles: scalar worst %.2f sigma (m <= 4, 1e5 draws), "
                  "field-level worst %.2f sigma (m <= 3, 16^2, %d draws)",
                  worst_sigma, worst_field_sigma, reps));
  } catch (const std::exception& e) {
    criterion_threw(6, e.what());
  }
}

void criterion_7_renormalisation(const LadderContext& ctx) {
  try {
    const std::vector<double> deltas = {0.125, 0.0625, 0.03125, 0.015625, 0.0078125};
    const RenormalisationReport report = run_renormalisation_divergence(ctx, deltas);

    // Independent quadrature of the prediction: sqrt(det a_hat) from the
    // converged cell solve times the cell mean of det(a)^{-1/2} sampled
    // directly from the coefficient at an unrelated resolution.
    const int q = 509;  // prime: no alignment with the coefficient's grid
    double mean_inv = 0.0;
    for (int j = 0; j < q; ++j) {
      for (int i = 0; i < q; ++i) {
        const Eigen::Matrix2d a = ctx.coefficient().evaluate((i + 0.5) / q, (j + 0.5) / q);
        mean_inv += 1.0 / std::sqrt(a.determinant());
      }
    }
    mean_inv /= q * q;
    const double predicted = std::sqrt(ctx.homogenised().a_hat.determinant()) * mean_inv;

    const bool ok = report.profile_fit.r_squared >= 0.99 &&
                    report.comparison_fit.r_squared >= 0.99 &&
                    std::abs(report.slope_ratio - predicted) <= 0.15 * predicted &&
                    // Midpoint quadrature of the discontinuous laminate
                    // integrand carries an O(1/q) bias, so the cross-check
                    // against the library's closed-form value is a 1% one.
                    rel_err(report.predicted_ratio, predicted) <= 0.01;
    criterion(7, ok,
              fmt("renormalisation divergence: R^2 = %.4f / %.4f, slope ratio %.4f vs "
                  "quadrature prediction %.4f (within 15%%)",
                  report.profile_fit.r_squared, report.comparison_fit.r_squared,
                  report.slope_ratio, predicted));
  } catch (const std::exception& e) {
    criterion_threw(7, e.what());
  }
}

void criterion_8_remainder_solver() {
  try {
    const DomainGrid grid = DomainGrid::make(31);
    const PeriodicCoefficient a = make_laminate(1, 1.0, 4.0, 128);
    const OperatorHandle op = OperatorHandle::assemble(grid, a, 0.125);
    const ScalarField u0 = centred_bump(grid, 0.45, 0.5);

    // March the deterministic cubic reduction in three windows with the
    // step refined where the transient lives, then compare along the path
    // against an RK4 reference of the same semidiscrete system.
    const std::vector<std::pair<double, double>> windows = {
        {0.05, 5e-6}, {0.20, 2.5e-5}, {0.75, 2.5e-4}};
    std::vector<double> record_times;
    for (int k = 0; k <= 100; ++k) record_times.push_back(0.01 * k);
    const std::vector<Eigen::VectorXd> ref = rk4_reference(op, u0, 1.0, 1e-4, record_times);

    double sup_diff = 0.0;
    bool dissipative = true;
    bool y0_zero = true;
    double t_base = 0.0;
    ScalarField state = u0;
    std::size_t next_record = 0;
    for (const auto& [span, dt] : windows) {
      const int steps = static_cast<int>(std::lround(span / dt));
      const FieldPath psi = zero_path(grid, dt, steps);
      const ForcingSet forcings = build_forcings(psi, state, op, zero_profile(grid), 2);
      const RemainderPath y = solve_remainder(op, forcings, 2, span, dt);
      y0_zero = y0_zero && y.y.col(0).cwiseAbs().maxCoeff() == 0.0;
      const FieldPath u = assemble_remainder(state, op, y);
      double prev = u.frames.col(0).norm();
      for (int j = 1; j <= u.steps(); ++j) {
        const double cur = u.frames.col(j).norm();
        dissipative = dissipative && cur <= prev * (1.0 + 1e-12);
        prev = cur;
      }
      while (next_record < record_times.size() &&
             record_times[next_record] <= t_base + span + 1e-12) {
        const double local = record_times[next_record] - t_base;
        const int j = static_cast<int>(std::lround(local / dt));
        if (std::abs(j * dt - local) < 1e-9) {
          sup_diff = std::max(
              sup_diff, (u.frames.col(j) - ref[next_record]).cwiseAbs().maxCoeff());
          ++next_record;
        } else {
          break;
        }
      }
      state = ScalarField::from_vector(grid, u.frames.col(u.steps()));
      t_base += span;
    }

    // Dirichlet stencil: the row of a corner node reaches only its two
    // interior neighbours -- no wrap-around, boundary identically zero.
    Eigen::VectorXd e0 = Eigen::VectorXd::Zero(grid.size());
    e0[grid.index(0, 0)] = 1.0;
    const Eigen::VectorXd row = op.matrix() * e0;
    int nonzeros = 0;
    for (int i = 0; i < row.size(); ++i) nonzeros += row[i] != 0.0 ? 1 : 0;
    const bool stencil_ok = nonzeros == 3 && row[grid.index(1, 0)] != 0.0 &&
                            row[grid.index(0, 1)] != 0.0;

    criterion(8, sup_diff <= 1e-4 && dissipative && y0_zero && stencil_ok,
              fmt("remainder solver: |u - RK4 ref|_sup = %.2e <= 1e-4 along the path, "
                  "L2 dissipative every step, Y(0) = 0 bitwise, Dirichlet stencil exact",
                  sup_diff));
  } catch (const std::exception& e) {
    criterion_threw(8, e.what());
  }
}

// March the cubic reduction from amplitude-`amp` data to t_end.  The collapse
// follows the envelope (u0^{-2} + 2t)^{-1/2}, so the stable explicit step
// grows linearly with t; windows widening a hundredfold keep the total step
// count bounded while the first window resolves the steepest descent.
Eigen::VectorXd collapse_march(const OperatorHandle& op, const ScalarField& u0, double t_end) {
  ScalarField state = u0;
  double t = 0.0;
  while (t < t_end - 1e-12) {
    const double amp = state.values.cwiseAbs().maxCoeff();
    const double dt_req = std::min(5e-5, 0.04 / (amp * amp));
    double span = t == 0.0 ? 50.0 * dt_req : 99.0 * t;
    span = std::min(span, t_end - t);
    const int steps = std::max(1, static_cast<int>(std::ceil(span / dt_req)));
    const double dt = span / steps;
    const FieldPath u = march_reduction(op, state, 2, span, dt);
    state = ScalarField::from_vector(op.grid(), u.frames.col(u.steps()));
    t += span;
  }
  return state.values;
}

void criterion_9_coming_down() {
  try {
    const DomainGrid grid = DomainGrid::make(31);
    const PeriodicCoefficient a = make_laminate(1, 1.0, 4.0, 128);
    const OperatorHandle op = OperatorHandle::assemble(grid, a, 0.125);

    // The pointwise collapse hands over to linear decay once the cubic rate
    // 1/(2t) drops to |lambda_1| ~ 40, i.e. at u* ~ 6.4.  Both amplitudes
    // must dwarf u* or the ratio of the two runs freezes into the slowest
    // mode, so the residual gap scales as 1/amp^2; 50 leaves a ~6x margin.
    // Flat data keeps every node above the handover threshold: compactly
    // supported bumps have thin tails whose nodes never come down, and that
    // band closes only logarithmically in the amplitude.
    ScalarField u0 = ScalarField::zero(grid);
    u0.values.setConstant(50.0);
    ScalarField u0_big = ScalarField::zero(grid);
    u0_big.values.setConstant(5000.0);
    const Eigen::VectorXd ua = collapse_march(op, u0, 0.5);
    const Eigen::VectorXd ub = collapse_march(op, u0_big, 0.5);

    const double rel = (ua - ub).norm() / std::max(ua.norm(), ub.norm());
    criterion(9, rel <= 0.05,
              fmt("coming down from infinity: runs from u0 and 100 u0 differ by %.2f%% "
                  "in L2 at t = 0.5 (<= 5%%)",
                  100.0 * rel));
  } catch (const std::exception& e) {
    criterion_threw(9, e.what());
  }
}

ExperimentConfig desk_config() {
  ExperimentConfig config;
  config.preset = "laminate";
  config.grid_n = 31;
  config.eps_ladder = {0.25, 0.125, 0.0625};
  config.m_orders = {2, 3};
  config.realisations = 50;
  config.seed = 1;
  config.n_deg = 2;
  config.t_end = 1.0;
  config.dt = 1e-3;
  config.burn_in = 1.0;
  return config;
}

void criterion_10_full_ladder() {
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentConfig config = desk_config();
    const ConvergenceReport report = run_full_convergence(config);

    ExperimentConfig control = config;
    control.preset = "constant";
    control.constant_a11 = 2.0;
    control.constant_a12 = 0.3;
    control.constant_a22 = 1.5;
    control.realisations = 5;
    control.t_end = 0.5;
    control.burn_in = 0.5;
    const ConvergenceReport zero = run_full_convergence(control);
    double control_max = 0.0;
    for (const RungStat& rung : zero.rungs) {
      control_max = std::max(control_max, std::abs(rung.value));
    }
    const double elapsed = seconds_since(t0);

    std::string rungs;
    for (const RungStat& rung : report.rungs) {
      rungs += fmt(" %.4g", rung.value);
    }
    criterion(10,
              report.passed && report.quarantined == 0 && zero.passed &&
                  control_max <= 1e-12 && elapsed < 1800.0,
              fmt("coupled ladder (R = 50, 32^2, T = 1): means%s decreasing with final < "
                  "0.5 first, constant control %.1e, %.0f s",
                  rungs.c_str(), control_max, elapsed));
  } catch (const std::exception& e) {
    criterion_threw(10, e.what());
  }
}

void criterion_11_determinism() {
  try {
    ExperimentConfig config;
    config.preset = "laminate";
    config.grid_n = 15;
    config.eps_ladder = {0.5, 0.25, 0.125};
    config.delta_ladder = {0.125, 0.0625, 0.03125};
    config.m_orders = {2};
    config.realisations = 2;
    config.seed = 77;
    config.n_deg = 2;
    config.t_end = 0.05;
    config.dt = 0.0025;
    config.burn_in = 0.05;
    config.t_semigroup = 0.25;

    namespace fs = std::filesystem;
    const fs::path dir1 = fs::temp_directory_path() / "accept_det_1";
    const fs::path dir2 = fs::temp_directory_path() / "accept_det_2";
    fs::remove_all(dir1);
    fs::remove_all(dir2);

    auto run_suite = [](const ExperimentConfig& cfg, const std::string& dir) {
      const PeriodicCoefficient a = experiment_coefficient(cfg);
      const LadderContext ctx(a, cfg.grid_n, cfg.eps_ladder);
      std::vector<ConvergenceReport> reports;
      reports.push_back(run_semigroup_difference(ctx, cfg.t_semigroup));
      reports.push_back(run_rho_difference(ctx));
      for (ConvergenceReport& r : run_wick_convergence(
               ctx, cfg.m_orders, default_test_function(ctx.grid()), cfg.kappa)) {
        reports.push_back(std::move(r));
      }
      reports.push_back(run_full_convergence(ctx, cfg));
      const RenormalisationReport renorm =
          run_renormalisation_divergence(ctx, cfg.delta_ladder);
      persist_report(reports, &renorm, make_manifest(cfg, {}), dir);
    };

    run_suite(config, dir1.string());
    const RunManifest restored = load_manifest(dir1.string());
    const bool config_round_trip =
        canonical_config(restored.config) == canonical_config(config);
    run_suite(restored.config, dir2.string());

    bool identical = true;
    std::string first_diff = "none";
    for (const char* name :
         {"report.json", "semigroup_diff.csv", "rho_diff.csv", "wick_m2.csv",
          "full_convergence.csv", "renorm_div.csv"}) {
      const std::string b1 = read_file(dir1 / name);
      const std::string b2 = read_file(dir2 / name);
      if (b1.empty() || b1 != b2) {
        identical = false;
        if (first_diff == "none") first_diff = name;
      }
    }

    // Tampered manifests must be rejected by the stored-hash check.
    std::string manifest_text = read_file(dir1 / "manifest.json");
    const std::string needle = "\"seed\": \"77\"";
    const std::size_t pos = manifest_text.find(needle);
    bool tamper_detected = false;
    if (pos != std::string::npos) {
      manifest_text.replace(pos, needle.size(), "\"seed\": \"78\"");
      std::ofstream(dir1 / "manifest.json", std::ios::binary) << manifest_text;
      try {
        load_manifest(dir1.string());
      } catch (const InvalidInput&) {
        tamper_detected = true;
      }
    }

    fs::remove_all(dir1);
    fs::remove_all(dir2);
    criterion(11, config_round_trip && identical && tamper_detected,
              fmt("determinism: manifest round-trip re-run bit-identical (first diff: %s), "
                  "tampered manifest rejected",
                  first_diff.c_str()));
  } catch (const std::exception& e) {
    criterion_threw(11, e.what());
  }
}

}  // namespace

int main() {
  std::printf("acceptance suite: oscillating-coefficient stochastic quantisation workbench\n");
  criterion_1_cell_oracle();
  criterion_2_voigt_reuss();
  {
    const LadderContext ctx(make_laminate(1, 1.0, 4.0, 128), 63,
                            {0.25, 0.125, 0.0625, 0.03125});
    criterion_3_semigroup(ctx);
    criterion_4_rho_difference(ctx);
    criterion_5_wick_rate(ctx);
    criterion_6_wick_oracles();
    criterion_7_renormalisation(ctx);
  }
  criterion_8_remainder_solver();
  criterion_9_coming_down();
  criterion_10_full_ladder();
  criterion_11_determinism();
  std::printf("%d/11 criteria passed\n", 11 - failures);
  return failures == 0 ? 0 : 1;
}
