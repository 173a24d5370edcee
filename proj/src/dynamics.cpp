#include "phihom/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "binio.hpp"
#include "phihom/besov.hpp"
#include "phihom/errors.hpp"
#include "phihom/util.hpp"

namespace phihom {

namespace {

void check_half_degree(int n_deg) {
  if (n_deg < 1 || n_deg > 3) {
    throw InvalidInput("unsupported nonlinearity: the half-degree must be 1, 2, or 3");
  }
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r *= static_cast<double>(n - k + i) / i;
  return r;
}

// max |v| + max |forward difference| / h, differences taken against the zero
// boundary as well.
double w1_inf_norm(const DomainGrid& g, const Eigen::Ref<const Eigen::VectorXd>& v) {
  double vmax = 0.0;
  double dmax = 0.0;
  auto value = [&](int i, int j) {
    return (i >= 0 && i < g.n && j >= 0 && j < g.n) ? v[g.index(i, j)] : 0.0;
  };
  for (int j = 0; j < g.n; ++j) {
    for (int i = 0; i < g.n; ++i) {
      const double u = value(i, j);
      vmax = std::max(vmax, std::abs(u));
      dmax = std::max({dmax, std::abs(value(i + 1, j) - u), std::abs(value(i - 1, j) - u),
                       std::abs(value(i, j + 1) - u), std::abs(value(i, j - 1) - u)});
    }
  }
  return vmax + dmax / g.h;
}

int aligned_steps(double span, double dt, const char* what) {
  const int steps = static_cast<int>(std::lround(span / dt));
  if (steps < 1 || std::abs(span - steps * dt) > 1e-9 * std::max(1.0, std::abs(span))) {
    throw InvalidInput(std::string("time misalignment: ") + what +
                       " is not a positive whole number of steps");
  }
  return steps;
}

}  // namespace

ForcingSet build_forcings(const FieldPath& psi, const ScalarField& u0, const OperatorHandle& L,
                          const RenormalisationProfile& C, int n_deg) {
  check_half_degree(n_deg);
  if (!(psi.grid == L.grid()) || !(u0.grid == L.grid()) || !(C.grid == L.grid())) {
    throw InvalidInput("forcing inputs live on different grids");
  }
  if (std::abs(psi.t0) > 1e-12) {
    throw InvalidInput("time misalignment: the linear path must start at t = 0");
  }
  if (!(psi.dt > 0.0)) throw InvalidInput("invalid step: dt must be positive");

  const int degree = 2 * n_deg - 1;
  const int steps = psi.steps();
  const int size = psi.grid.size();

  ForcingSet out;
  out.n_deg = n_deg;
  out.grid = psi.grid;
  out.dt = psi.dt;
  out.t0 = 0.0;
  out.g.assign(static_cast<std::size_t>(degree + 1), Eigen::MatrixXd(size, steps + 1));

  Eigen::VectorXd drift = u0.values;
  ScalarField shifted = ScalarField::zero(psi.grid);
  for (int j = 0; j <= steps; ++j) {
    if (j > 0) drift = L.solve_shifted(psi.dt, drift);
    shifted.values = psi.frames.col(j) + drift;
    for (int k = 0; k <= degree; ++k) {
      out.g[static_cast<std::size_t>(k)].col(j) =
          wick_power(shifted, degree - k, C).values.values;
    }
  }

  std::ostringstream meta;
  meta << "wick powers 0.." << degree << " of psi + drift; C: " << C.method
       << ", delta = " << C.delta << ", eps = " << C.epsilon;
  out.provenance = meta.str();
  return out;
}

RemainderPath solve_remainder(const OperatorHandle& L, const ForcingSet& forcings, int n_deg,
                              double t_end, double dt) {
  check_half_degree(n_deg);
  if (forcings.n_deg != n_deg) {
    throw InvalidInput("forcing set was built for a different nonlinearity degree");
  }
  if (!(forcings.grid == L.grid())) throw InvalidInput("forcings live on a different grid");
  if (!(dt > 0.0)) throw InvalidInput("invalid step: dt must be positive");
  if (!(t_end > 0.0)) throw InvalidInput("invalid horizon: t_end must be positive");
  if (std::abs(forcings.t0) > 1e-12 || std::abs(forcings.dt - dt) > 1e-12 * dt) {
    throw InvalidInput("time misalignment: forcings must share the march step grid from t = 0");
  }
  const int steps = aligned_steps(t_end, dt, "the horizon");
  if (forcings.steps() < steps) {
    throw InvalidInput("time misalignment: forcings cover fewer steps than the horizon");
  }

  const int degree = 2 * n_deg - 1;
  const int size = forcings.grid.size();
  std::vector<double> binom(static_cast<std::size_t>(degree + 1));
  for (int k = 0; k <= degree; ++k) binom[static_cast<std::size_t>(k)] = binomial(degree, k);

  RemainderPath path;
  path.grid = forcings.grid;
  path.dt = dt;
  path.epsilon = L.epsilon();
  path.n_deg = n_deg;
  path.forcing_meta = forcings.provenance;
  path.y.setZero(size, steps + 1);

  Eigen::VectorXd y = Eigen::VectorXd::Zero(size);
  Eigen::VectorXd force(size), ypow(size), gbar(size);
  for (int j = 0; j < steps; ++j) {
    force.setZero();
    ypow.setOnes();
    for (int k = 0; k <= degree; ++k) {
      const Eigen::MatrixXd& gk = forcings.g[static_cast<std::size_t>(k)];
      gbar = 0.5 * (gk.col(j) + gk.col(j + 1));
      force.noalias() += binom[static_cast<std::size_t>(k)] * gbar.cwiseProduct(ypow);
      if (k < degree) ypow = ypow.cwiseProduct(y);
    }
    y = L.solve_shifted(dt, (y - dt * force).eval());
    const double ymax = y.cwiseAbs().maxCoeff();
    if (!(ymax <= 1e6)) {
      std::ostringstream msg;
      msg << "remainder blow-up at t = " << (j + 1) * dt
          << ": |Y| exceeded 1e6 (reduce dt or check the forcing set)";
      throw NumericalError(msg.str());
    }
    path.y.col(j + 1) = y;
    path.x_tau = std::max(path.x_tau, w1_inf_norm(path.grid, y));
  }
  return path;
}

FieldPath assemble_solution(const FieldPath& psi, const ScalarField& u0, const OperatorHandle& L,
                            const RemainderPath& y) {
  if (!(psi.grid == y.grid) || !(u0.grid == y.grid) || !(L.grid() == y.grid)) {
    throw InvalidInput("solution parts live on different grids");
  }
  if (std::abs(psi.t0) > 1e-12 || std::abs(psi.dt - y.dt) > 1e-12 * y.dt ||
      psi.steps() < y.steps()) {
    throw InvalidInput("time misalignment: linear path and remainder disagree");
  }
  FieldPath out;
  out.grid = y.grid;
  out.t0 = 0.0;
  out.dt = y.dt;
  out.frames.resize(y.grid.size(), y.steps() + 1);
  Eigen::VectorXd drift = u0.values;
  for (int j = 0; j <= y.steps(); ++j) {
    if (j > 0) drift = L.solve_shifted(y.dt, drift);
    out.frames.col(j) = psi.frames.col(j) + drift + y.y.col(j);
  }
  return out;
}

FieldPath assemble_remainder(const ScalarField& u0, const OperatorHandle& L,
                             const RemainderPath& y) {
  if (!(u0.grid == y.grid) || !(L.grid() == y.grid)) {
    throw InvalidInput("solution parts live on different grids");
  }
  FieldPath out;
  out.grid = y.grid;
  out.t0 = 0.0;
  out.dt = y.dt;
  out.frames.resize(y.grid.size(), y.steps() + 1);
  Eigen::VectorXd drift = u0.values;
  for (int j = 0; j <= y.steps(); ++j) {
    if (j > 0) drift = L.solve_shifted(y.dt, drift);
    out.frames.col(j) = drift + y.y.col(j);
  }
  return out;
}

EnergyDiagnostics energy_diagnostics(const FieldPath& u, const std::vector<int>& m_list, int n_deg,
                                     const ForcingSet* forcings, double kappa) {
  check_half_degree(n_deg);
  if (m_list.empty()) throw InvalidInput("empty moment list");
  for (int m : m_list) {
    if (m < 1) throw InvalidInput("moment orders must be positive integers");
  }

  EnergyDiagnostics diag;
  diag.n_deg = n_deg;
  diag.m_list = m_list;
  diag.sup_weighted.assign(m_list.size(), 0.0);

  ScalarField frame = ScalarField::zero(u.grid);
  ScalarField power = ScalarField::zero(u.grid);
  for (int j = 0; j <= u.steps(); ++j) {
    frame.values = u.frames.col(j);
    const double t = u.time(j);
    diag.x_tau = std::max(diag.x_tau, w1_inf_norm(u.grid, frame.values));
    for (std::size_t mi = 0; mi < m_list.size(); ++mi) {
      const int m = m_list[mi];
      EnergyRow row;
      row.t = t;
      row.m = m;
      const double lp = lp_norm(frame, 2.0 * m);
      row.lp_pow = std::pow(lp, 2.0 * m);
      power.values = frame.values;
      for (int r = 1; r < m; ++r) power.values = power.values.cwiseProduct(frame.values);
      row.grad_energy = dirichlet_gradient_energy(power);
      const double theta = n_deg > 1 ? static_cast<double>(m) / (n_deg - 1) : 0.0;
      row.weighted = std::pow(t, theta) * row.lp_pow;
      diag.sup_weighted[mi] = std::max(diag.sup_weighted[mi], row.weighted);
      diag.rows.push_back(row);
    }
  }

  if (forcings != nullptr && kappa > 0.0) {
    if (!(forcings->grid == u.grid)) throw InvalidInput("forcings live on a different grid");
    const TestFamily family = TestFamily::dyadic(u.grid);
    double worst = 0.0;
    ScalarField gframe = ScalarField::zero(u.grid);
    for (const Eigen::MatrixXd& gk : forcings->g) {
      for (int j = 0; j <= std::min(forcings->steps(), u.steps()); ++j) {
        const double t = forcings->time(j);
        if (t <= 0.0) continue;
        gframe.values = gk.col(j);
        const double norm = neg_holder_norm(gframe, -kappa, family).value;
        worst = std::max(worst, std::pow(t, 0.2) * norm);
      }
    }
    diag.forcing_diag = worst;
  }
  return diag;
}

void export_diagnostics_csv(const EnergyDiagnostics& diag, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open CSV for writing: " + path);
  out << "t,m,value,weighted_value\n";
  out.precision(17);
  for (const EnergyRow& row : diag.rows) {
    out << row.t << ',' << row.m << ',' << row.lp_pow << ',' << row.weighted << '\n';
  }
  if (!out) throw NumericalError("CSV write failed: " + path);
}

void dump_path(const FieldPath& path, std::ostream& out) {
  out.put('P');
  binio::put_u64(out, static_cast<std::uint64_t>(path.grid.n));
  binio::put_f64(out, path.dt);
  binio::put_f64(out, path.t0);
  binio::put_u64(out, static_cast<std::uint64_t>(path.steps()));
  for (int j = 0; j <= path.steps(); ++j) {
    for (int a = 0; a < path.grid.size(); ++a) binio::put_f64(out, path.frames(a, j));
  }
  if (!out) throw NumericalError("path dump failed");
}

FieldPath load_path(std::istream& in) {
  const int type = in.get();
  if (type != 'P') throw InvalidInput("not a path dump (bad type byte)");
  const auto n = static_cast<int>(binio::get_u64(in));
  if (n < 1) throw InvalidInput("path dump carries an invalid grid size");
  FieldPath path;
  path.grid = DomainGrid::make(n);
  path.dt = binio::get_f64(in);
  path.t0 = binio::get_f64(in);
  const auto steps = static_cast<int>(binio::get_u64(in));
  if (steps < 0) throw InvalidInput("path dump carries an invalid step count");
  if (!(path.dt > 0.0)) throw InvalidInput("path dump carries an invalid step size");
  path.frames.resize(path.grid.size(), steps + 1);
  for (int j = 0; j <= steps; ++j) {
    for (int a = 0; a < path.grid.size(); ++a) path.frames(a, j) = binio::get_f64(in);
  }
  return path;
}

}  // namespace phihom
