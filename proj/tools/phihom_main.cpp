// Command-line driver: cell solves, Green-kernel verification, single
// simulations, and the convergence/renormalisation experiment suites.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "phihom/bench.hpp"
#include "phihom/besov.hpp"
#include "phihom/config.hpp"
#include "phihom/dynamics.hpp"
#include "phihom/errors.hpp"
#include "phihom/gaussian.hpp"
#include "phihom/noise.hpp"
#include "phihom/operators.hpp"
#include "phihom/util.hpp"

extern "C" void openblas_set_num_threads(int);

namespace {

using namespace phihom;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  bool enforce = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config file (INI)");
  cmd->add_option("--out", opts.out_dir, "output directory (overrides the config)");
  cmd->add_option("--seed", opts.seed, "RNG seed (overrides the config)");
  cmd->add_option("--threads", opts.threads, "BLAS thread count (overrides the config)");
  cmd->add_flag("--assert", opts.enforce, "enforce the acceptance thresholds (exit 1 on failure)");
}

void drop_default(ParsedConfig& pc, const std::string& key) {
  auto& d = pc.defaults_applied;
  d.erase(std::remove(d.begin(), d.end(), key), d.end());
  if (std::find(pc.overrides.begin(), pc.overrides.end(), key) == pc.overrides.end()) {
    pc.overrides.push_back(key);
  }
}

ParsedConfig resolve_config(const CLI::App* cmd, const CommonOpts& opts) {
  ParsedConfig pc;
  if (!opts.config_path.empty()) {
    pc = parse_config(opts.config_path);
  } else {
    for (const auto& [key, value] : config_entries(pc.config)) {
      pc.defaults_applied.push_back(key);
    }
    validate_config(pc.config);
  }
  if (cmd->count("--seed") > 0) {
    pc.config.seed = opts.seed;
    drop_default(pc, "seed");
  }
  if (cmd->count("--threads") > 0) {
    pc.config.threads = opts.threads;
    drop_default(pc, "threads");
  }
  if (cmd->count("--out") > 0) pc.config.out_dir = opts.out_dir;
  validate_config(pc.config);
  if (pc.config.threads > 0) openblas_set_num_threads(pc.config.threads);
  return pc;
}

std::string hex16(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

int checks_failed = 0;

void check(bool ok, const std::string& what) {
  std::cout << (ok ? "[PASS] " : "[FAIL] ") << what << "\n";
  if (!ok) ++checks_failed;
}

nlohmann::json matrix_json(const Eigen::Matrix2d& m) {
  return {{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw NumericalError("write failed: " + path.string());
}

// Largest eigenvalue of a symmetric 2x2 deficit matrix; bracket checks ask
// that hi - lo stays positive semidefinite up to round-off.
double min_eigenvalue(const Eigen::Matrix2d& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(0.5 * (m + m.transpose()));
  return es.eigenvalues().minCoeff();
}

int run_cell_solve(const CLI::App* cmd, const CommonOpts& opts) {
  const ParsedConfig pc = resolve_config(cmd, opts);
  const PeriodicCoefficient a = experiment_coefficient(pc.config);
  const Corrector chi = solve_corrector(a);
  const HomogenisedMatrix hm = homogenised_matrix(a, chi);

  nlohmann::json j;
  j["config_hash"] = hex16(config_hash(pc.config));
  j["preset"] = pc.config.preset;
  j["resolution"] = chi.resolution;
  j["a_hat"] = matrix_json(hm.a_hat);
  j["voigt"] = matrix_json(hm.voigt);
  j["reuss"] = matrix_json(hm.reuss);
  j["asymmetry"] = hm.asymmetry;
  j["residuals"] = {{"chi1", chi.relative_residual1}, {"chi2", chi.relative_residual2}};
  j["iterations"] = {{"chi1", chi.residual_history1.size()},
                     {"chi2", chi.residual_history2.size()}};
  std::cout << j.dump(2) << "\n";
  if (cmd->count("--out") > 0 || !pc.config.out_dir.empty()) {
    std::filesystem::create_directories(pc.config.out_dir);
    write_text(std::filesystem::path(pc.config.out_dir) / "cell.json", j.dump(2) + "\n");
  }

  if (opts.enforce) {
    check(chi.relative_residual1 <= 1e-8, "corrector chi1 residual <= 1e-8");
    check(chi.relative_residual2 <= 1e-8, "corrector chi2 residual <= 1e-8");
    check(hm.asymmetry <= 1e-8, "homogenised matrix symmetric to 1e-8");
    check(min_eigenvalue(hm.voigt - hm.a_hat) >= -1e-8, "a_hat below the Voigt mean");
    check(min_eigenvalue(hm.a_hat - hm.reuss) >= -1e-8, "a_hat above the Reuss mean");
    return checks_failed == 0 ? 0 : 1;
  }
  return 0;
}

int run_green_verify(const CLI::App* cmd, const CommonOpts& opts) {
  const ParsedConfig pc = resolve_config(cmd, opts);
  const PeriodicCoefficient a = experiment_coefficient(pc.config);
  const LadderContext ctx(a, pc.config.grid_n, pc.config.eps_ladder);
  const double eps = ctx.ladder().back();
  const std::vector<double> times = {0.25 * pc.config.t_semigroup, 0.5 * pc.config.t_semigroup,
                                     pc.config.t_semigroup, 2.0 * pc.config.t_semigroup};

  std::ostringstream csv;
  csv.precision(17);
  csv << "# config_hash = " << hex16(config_hash(pc.config)) << '\n';
  csv << "eps,t,pointwise_stat,gradient_stat,difference_stat,mass_max,min_value,max_value,"
         "symmetry_defect\n";
  std::printf("%8s %8s %12s %12s %12s %12s %12s %12s\n", "eps", "t", "pointwise", "gradient",
              "difference", "mass_max", "min_value", "sym_defect");
  std::vector<GreenBoundsRow> rows;
  for (double t : times) {
    const GreenBoundsRow row = verify_green_bounds(ctx.op(eps), ctx.op(0.0), t);
    rows.push_back(row);
    csv << row.eps << ',' << row.t << ',' << row.pointwise_stat << ',' << row.gradient_stat
        << ',' << row.difference_stat << ',' << row.mass_max << ',' << row.min_value << ','
        << row.max_value << ',' << row.symmetry_defect << '\n';
    std::printf("%8.5f %8.4f %12.5g %12.5g %12.5g %12.9f %12.5g %12.5g\n", row.eps, row.t,
                row.pointwise_stat, row.gradient_stat, row.difference_stat, row.mass_max,
                row.min_value, row.symmetry_defect);
  }
  std::filesystem::create_directories(pc.config.out_dir);
  write_text(std::filesystem::path(pc.config.out_dir) / "green.csv", csv.str());

  if (opts.enforce) {
    for (const GreenBoundsRow& row : rows) {
      const std::string at = " at t = " + std::to_string(row.t);
      check(row.mass_max <= 1.0 + 1e-8, "sub-Markov mass bound" + at);
      check(row.symmetry_defect <= 1e-10, "kernel symmetry" + at);
      check(row.min_value >= -1e-8 * row.max_value, "kernel nonnegativity" + at);
    }
    return checks_failed == 0 ? 0 : 1;
  }
  return 0;
}

int run_simulate(const CLI::App* cmd, const CommonOpts& opts, double eps_flag, bool eps_set) {
  const ParsedConfig pc = resolve_config(cmd, opts);
  const ExperimentConfig& config = pc.config;
  const PeriodicCoefficient a = experiment_coefficient(config);
  const LadderContext ctx(a, config.grid_n, config.eps_ladder);
  const double eps = eps_set ? eps_flag : ctx.ladder().back();
  const OperatorHandle& op = ctx.op(eps);  // throws for non-rung values
  const DomainGrid& grid = ctx.grid();

  const NoiseRealisation xi(grid, config.dt, -config.burn_in, config.t_end, config.seed, 0);
  const FieldPath psi = evolve_linear(op, ScalarField::zero(grid), xi, config.t_end);
  const RenormalisationProfile c = stationary_variance_profile(op);
  const ScalarField u0 = ScalarField::from_vector(grid, -psi.frames.col(0));
  const ForcingSet forcings = build_forcings(psi, u0, op, c, config.n_deg);
  const RemainderPath y = solve_remainder(op, forcings, config.n_deg, config.t_end, config.dt);
  const FieldPath u = assemble_remainder(u0, op, y);
  const FieldPath phi = assemble_solution(psi, u0, op, y);

  std::vector<int> m_list = config.m_orders;
  if (m_list.empty()) m_list = {1};
  const EnergyDiagnostics diag =
      energy_diagnostics(u, m_list, config.n_deg, &forcings, config.kappa);

  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  const RunManifest manifest = make_manifest(config, pc.defaults_applied);
  persist_report({}, nullptr, manifest, config.out_dir);
  auto dump_to = [&](const std::string& name, const FieldPath& path) {
    std::ofstream out(fs::path(config.out_dir) / name, std::ios::binary);
    if (!out) throw InvalidInput("cannot open for writing: " + name);
    dump_path(path, out);
  };
  dump_to("psi.bin", psi);
  dump_to("remainder.bin", u);
  dump_to("solution.bin", phi);

  std::ostringstream csv;
  csv.precision(17);
  csv << "# config_hash = " << hex16(manifest.hash) << '\n';
  csv << "t,m,value,weighted_value\n";
  for (const EnergyRow& row : diag.rows) {
    csv << row.t << ',' << row.m << ',' << row.lp_pow << ',' << row.weighted << '\n';
  }
  write_text(fs::path(config.out_dir) / "diagnostics.csv", csv.str());

  std::cout << "simulated eps = " << eps << ", " << u.steps() << " steps of dt = " << config.dt
            << " (config " << hex16(manifest.hash) << ")\n";
  std::cout << "  path norm X_tau        = " << diag.x_tau << "\n";
  for (std::size_t i = 0; i < diag.m_list.size(); ++i) {
    std::cout << "  sup_t weighted L^" << 2 * diag.m_list[i]
              << " moment = " << diag.sup_weighted[i] << "\n";
  }
  std::cout << "  forcing diagnostic     = " << diag.forcing_diag << "\n";
  std::cout << "  outputs in " << config.out_dir << "/\n";

  if (opts.enforce) {
    check(std::isfinite(diag.x_tau) && diag.x_tau < 1e6, "path norm finite and below the guard");
    bool finite = true;
    for (const EnergyRow& row : diag.rows) finite = finite && std::isfinite(row.weighted);
    check(finite, "energy diagnostics finite");
    return checks_failed == 0 ? 0 : 1;
  }
  return 0;
}

void print_report(const ConvergenceReport& report) {
  std::cout << report.name << ":\n";
  for (const RungStat& rung : report.rungs) {
    std::cout << "  eps = " << rung.eps << "  value = " << rung.value;
    if (rung.samples > 1) {
      std::cout << " +- " << rung.std_error << " (" << rung.samples << " realisations)";
    }
    if (!report.extra_label.empty()) {
      std::cout << "  " << report.extra_label << " = " << rung.extra;
    }
    std::cout << "\n";
  }
  if (report.fit.points_used >= 3) {
    std::cout << "  rate " << report.fit.slope << " +- " << report.fit.ci_half_width
              << " (target " << report.target_exponent << ", R^2 = " << report.fit.r_squared
              << ")\n";
  } else {
    std::cout << "  rate fit skipped (ladder collapsed to zeros)\n";
  }
  if (report.quarantined > 0) {
    std::cout << "  " << report.quarantined << " realisation(s) quarantined\n";
  }
  std::cout << "  " << (report.passed ? "pass" : "FAIL") << "\n";
}

int run_convergence(const CLI::App* cmd, const CommonOpts& opts) {
  const ParsedConfig pc = resolve_config(cmd, opts);
  const ExperimentConfig& config = pc.config;
  const PeriodicCoefficient a = experiment_coefficient(config);
  const LadderContext ctx(a, config.grid_n, config.eps_ladder);

  std::vector<ConvergenceReport> reports;
  reports.push_back(run_semigroup_difference(ctx, config.t_semigroup));
  print_report(reports.back());
  reports.push_back(run_rho_difference(ctx));
  print_report(reports.back());
  for (ConvergenceReport& report :
       run_wick_convergence(ctx, config.m_orders, default_test_function(ctx.grid()),
                            config.kappa)) {
    print_report(report);
    reports.push_back(std::move(report));
  }
  reports.push_back(run_full_convergence(ctx, config));
  print_report(reports.back());

  const RunManifest manifest = make_manifest(config, pc.defaults_applied);
  persist_report(reports, nullptr, manifest, config.out_dir);
  std::cout << "report written to " << config.out_dir << "/ (config " << hex16(manifest.hash)
            << ")\n";

  if (opts.enforce) {
    for (const ConvergenceReport& report : reports) {
      check(report.passed, report.name + " acceptance");
    }
    return checks_failed == 0 ? 0 : 1;
  }
  return 0;
}

int run_renorm_div(const CLI::App* cmd, const CommonOpts& opts) {
  const ParsedConfig pc = resolve_config(cmd, opts);
  const ExperimentConfig& config = pc.config;
  const PeriodicCoefficient a = experiment_coefficient(config);
  const LadderContext ctx(a, config.grid_n, config.eps_ladder);
  const RenormalisationReport report = run_renormalisation_divergence(ctx, config.delta_ladder);

  std::printf("%12s %18s %18s\n", "delta", "mean C(delta)", "mean C~(delta)");
  for (std::size_t i = 0; i < report.deltas.size(); ++i) {
    std::printf("%12.8f %18.12f %18.12f\n", report.deltas[i], report.mean_profile[i],
                report.mean_comparison[i]);
  }
  std::cout << "profile slope vs |log delta|    = " << report.profile_fit.slope
            << " (R^2 = " << report.profile_fit.r_squared << ")\n";
  std::cout << "comparison slope vs |log delta| = " << report.comparison_fit.slope
            << " (R^2 = " << report.comparison_fit.r_squared << ")\n";
  std::cout << "slope ratio = " << report.slope_ratio << ", predicted "
            << report.predicted_ratio << "\n";

  const RunManifest manifest = make_manifest(config, pc.defaults_applied);
  persist_report({}, &report, manifest, config.out_dir);
  std::cout << "report written to " << config.out_dir << "/ (config " << hex16(manifest.hash)
            << ")\n";

  if (opts.enforce) {
    check(report.profile_fit.r_squared >= 0.99, "profile mean linear in |log delta|");
    check(report.comparison_fit.r_squared >= 0.99, "comparison mean linear in |log delta|");
    check(std::abs(report.slope_ratio - report.predicted_ratio) <=
              0.15 * report.predicted_ratio,
          "slope ratio within 15% of the homogenisation prediction");
    return checks_failed == 0 ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Oscillating-coefficient stochastic quantisation workbench"};
  app.require_subcommand(1);

  CommonOpts cell_opts, green_opts, sim_opts, conv_opts, renorm_opts;
  double sim_eps = 0.0;

  CLI::App* cell = app.add_subcommand(
      "cell-solve", "solve the periodic cell problem and print the homogenised matrix");
  add_common(cell, cell_opts);
  CLI::App* green = app.add_subcommand(
      "green-verify", "check the semigroup kernel against the heat-kernel shape bounds");
  add_common(green, green_opts);
  CLI::App* sim = app.add_subcommand(
      "simulate", "run one coupled realisation and dump the paths and diagnostics");
  add_common(sim, sim_opts);
  CLI::Option* eps_opt =
      sim->add_option("--eps", sim_eps, "ladder rung to simulate (0 = homogenised; "
                                        "default: the finest rung)");
  CLI::App* conv = app.add_subcommand(
      "convergence", "run the full convergence suite and persist the report");
  add_common(conv, conv_opts);
  CLI::App* renorm = app.add_subcommand(
      "renorm-div", "compare the renormalisation divergences along the delta ladder");
  add_common(renorm, renorm_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cell->parsed()) return run_cell_solve(cell, cell_opts);
    if (green->parsed()) return run_green_verify(green, green_opts);
    if (sim->parsed()) return run_simulate(sim, sim_opts, sim_eps, eps_opt->count() > 0);
    if (conv->parsed()) return run_convergence(conv, conv_opts);
    if (renorm->parsed()) return run_renorm_div(renorm, renorm_opts);
  } catch (const phihom::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const phihom::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
