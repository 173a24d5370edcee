#include "phihom/gaussian.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <vector>

#include "binio.hpp"
#include "phihom/cell.hpp"
#include "phihom/errors.hpp"
#include "phihom/util.hpp"

namespace phihom {

namespace {

// mu per eigenvalue for an optional mollification; 1 when absent.
Eigen::VectorXd mode_dampings(const Eigen::VectorXd& lambda,
                              const std::optional<Mollification>& moll) {
  Eigen::VectorXd mu = Eigen::VectorXd::Ones(lambda.size());
  if (!moll || moll->delta == 0.0) return mu;
  if (moll->method != MollifyMethod::kHeatKernel) {
    throw InvalidInput(
        "covariance mollification supports the heat-kernel method only "
        "(the time profile is a noise-array ablation)");
  }
  if (!(moll->delta > 0.0 && moll->delta < 0.5)) {
    throw InvalidInput("mollification scale must lie in (0, 1/2)");
  }
  const double d2 = moll->delta * moll->delta;
  for (int k = 0; k < lambda.size(); ++k) mu[k] = mollifier_symbol(d2 * lambda[k]);
  return mu;
}

void check_strictly_positive(const Eigen::VectorXd& values, const char* what) {
  if (!(values.minCoeff() > 0.0)) {
    throw NumericalError(std::string("assumption violation: ") + what + " is not strictly positive");
  }
}

}  // namespace

double mollifier_symbol(double z) {
  // e^{z} m_rho(z) = integral rho(s) e^{(1+s) z} ds: every factor lies in
  // [0, 1] for z <= 0, so the quadrature never overflows.
  return gauss_legendre_64([z](double s) { return mollifier_bump(s) * std::exp((1.0 + s) * z); },
                           -1.0, 1.0);
}

double stationary_mode_weight(double lambda, double h2,
                              const std::optional<Mollification>& moll) {
  if (!(lambda < 0.0)) throw InvalidInput("stationary weight needs a strictly negative eigenvalue");
  if (!(h2 > 0.0)) throw InvalidInput("node volume must be positive");
  double mu = 1.0;
  if (moll && moll->delta != 0.0) {
    mu = mode_dampings(Eigen::VectorXd::Constant(1, lambda), moll)[0];
  }
  return mu * mu / (2.0 * std::abs(lambda) * h2);
}

CovarianceKernel stationary_covariance(const OperatorHandle& L,
                                       const std::optional<Mollification>& moll) {
  const Eigen::VectorXd& lambda = L.eigenvalues();
  const Eigen::MatrixXd& v = L.eigenvectors();
  const double h2 = L.grid().h * L.grid().h;
  const Eigen::VectorXd mu = mode_dampings(lambda, moll);

  Eigen::VectorXd w(lambda.size());
  for (int k = 0; k < lambda.size(); ++k) {
    w[k] = mu[k] * mu[k] / (2.0 * std::abs(lambda[k]) * h2);
  }

  CovarianceKernel kernel;
  kernel.eps1 = kernel.eps2 = L.epsilon();
  kernel.grid = L.grid();
  kernel.delta = moll ? moll->delta : 0.0;
  kernel.method = "lyapunov-exact";
  const Eigen::MatrixXd scaled = v * w.asDiagonal();
  kernel.matrix = scaled * v.transpose();
  check_strictly_positive(kernel.matrix.diagonal(), "covariance diagonal");
  return kernel;
}

RenormalisationProfile stationary_variance_profile(const OperatorHandle& L,
                                                   const std::optional<Mollification>& moll) {
  const Eigen::VectorXd& lambda = L.eigenvalues();
  const Eigen::MatrixXd& v = L.eigenvectors();
  const double h2 = L.grid().h * L.grid().h;
  const Eigen::VectorXd mu = mode_dampings(lambda, moll);

  Eigen::VectorXd w(lambda.size());
  for (int k = 0; k < lambda.size(); ++k) {
    w[k] = mu[k] * mu[k] / (2.0 * std::abs(lambda[k]) * h2);
  }

  RenormalisationProfile profile;
  profile.grid = L.grid();
  profile.delta = moll ? moll->delta : 0.0;
  profile.epsilon = L.epsilon();
  profile.method = "lyapunov-exact";
  profile.values = v.cwiseProduct(v) * w;
  check_strictly_positive(profile.values, "variance profile");
  return profile;
}

CovarianceKernel cross_covariance(const OperatorHandle& L1, const OperatorHandle& L2,
                                  const std::optional<Mollification>& moll) {
  if (!(L1.grid() == L2.grid())) throw InvalidInput("coupled operators live on different grids");
  const Eigen::VectorXd& l1 = L1.eigenvalues();
  const Eigen::VectorXd& l2 = L2.eigenvalues();
  const Eigen::MatrixXd& v1 = L1.eigenvectors();
  const Eigen::MatrixXd& v2 = L2.eigenvectors();
  const double h2 = L1.grid().h * L1.grid().h;
  const Eigen::VectorXd mu1 = mode_dampings(l1, moll);
  const Eigen::VectorXd mu2 = mode_dampings(l2, moll);

  // Coupled Lyapunov relation: L1 rho + rho L2 + M1 M2^T / h^2 = 0 in the two
  // eigenbases.
  Eigen::MatrixXd x = v1.transpose() * v2;
  for (int l = 0; l < x.cols(); ++l) {
    for (int k = 0; k < x.rows(); ++k) {
      x(k, l) *= mu1[k] * mu2[l] / ((std::abs(l1[k]) + std::abs(l2[l])) * h2);
    }
  }

  CovarianceKernel kernel;
  kernel.eps1 = L1.epsilon();
  kernel.eps2 = L2.epsilon();
  kernel.grid = L1.grid();
  kernel.delta = moll ? moll->delta : 0.0;
  kernel.method = "lyapunov-exact";
  const Eigen::MatrixXd scaled = v1 * x;
  kernel.matrix = scaled * v2.transpose();
  return kernel;
}

StationarySampler::StationarySampler(const CovarianceKernel& sigma) : grid_(sigma.grid) {
  if (sigma.eps1 != sigma.eps2) {
    throw InvalidInput("stationary sampling needs a diagonal (eps, eps) kernel");
  }
  const int size = sigma.grid.size();
  if (sigma.matrix.rows() != size || sigma.matrix.cols() != size) {
    throw InvalidInput("kernel dimensions do not match grid");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sigma.matrix);
  if (llt.info() != Eigen::Success) {
    const double ridge = 1e-12 * sigma.matrix.trace();
    Eigen::MatrixXd jittered = sigma.matrix;
    jittered.diagonal().array() += ridge;
    llt.compute(jittered);
    if (llt.info() != Eigen::Success) {
      throw NumericalError(
          "covariance is not positive semidefinite (factorisation failed beyond 1e-12 trace "
          "jitter)");
    }
  }
  chol_ = llt.matrixL();
}

ScalarField StationarySampler::draw(std::uint64_t seed, std::uint64_t index) const {
  Eigen::VectorXd z(grid_.size());
  for (int node = 0; node < grid_.size(); ++node) {
    z[node] = counter_gaussian(seed, 0x57A717ULL, index, static_cast<std::uint64_t>(node));
  }
  return ScalarField::from_vector(grid_, chol_ * z);
}

ScalarField sample_stationary(const CovarianceKernel& sigma, std::uint64_t seed,
                              std::uint64_t draw) {
  return StationarySampler(sigma).draw(seed, draw);
}

namespace {

struct HorizonMap {
  int first_step = 0;
  int steps = 0;
};

HorizonMap map_horizon(double noise_t_start, int noise_steps, double dt, double t_end) {
  if (!(dt > 0.0)) throw InvalidInput("invalid step: dt must be positive");
  const long steps = std::lround(t_end / dt);
  if (steps < 1 || std::abs(steps * dt - t_end) > 1e-9 * std::max(1.0, std::abs(t_end))) {
    throw InvalidInput("invalid horizon: t_end is not a positive whole number of steps");
  }
  const long first = std::lround(-noise_t_start / dt);
  const bool aligned = std::abs(noise_t_start + first * dt) <= 1e-9 * std::max(1.0, std::abs(noise_t_start));
  if (!aligned || first < 0 || first + steps > noise_steps) {
    throw InvalidInput(
        "invalid horizon: the driving noise must cover [0, t_end] on the same step grid");
  }
  return {static_cast<int>(first), static_cast<int>(steps)};
}

Eigen::MatrixXd evolve_frames(const OperatorHandle& L, const Eigen::VectorXd& u0, double dt,
                              int pre_steps, int steps,
                              const std::function<Eigen::VectorXd(int)>& increment,
                              bool keep_path) {
  Eigen::VectorXd u = u0;
  for (int k = 0; k < pre_steps; ++k) {
    u = L.solve_shifted(dt, u + dt * increment(k));
  }
  Eigen::MatrixXd frames(u0.size(), keep_path ? steps + 1 : 1);
  if (keep_path) frames.col(0) = u;
  for (int k = 0; k < steps; ++k) {
    u = L.solve_shifted(dt, u + dt * increment(pre_steps + k));
    if (keep_path) frames.col(k + 1) = u;
  }
  if (!keep_path) frames.col(0) = u;
  return frames;
}

void check_evolution_grids(const OperatorHandle& L, const ScalarField& psi0,
                           const DomainGrid& noise_grid) {
  if (!(psi0.grid == L.grid())) throw InvalidInput("initial state lives on a different grid");
  if (!(noise_grid == L.grid())) throw InvalidInput("noise lives on a different grid");
}

}  // namespace

FieldPath evolve_linear(const OperatorHandle& L, const ScalarField& psi0,
                        const NoiseRealisation& xi, double t_end) {
  check_evolution_grids(L, psi0, xi.grid());
  const HorizonMap hm = map_horizon(xi.t_start(), xi.steps(), xi.dt(), t_end);
  Eigen::MatrixXd frames =
      evolve_frames(L, psi0.values, xi.dt(), hm.first_step, hm.steps,
                    [&](int k) { return xi.increment(k); }, true);
  return FieldPath{L.grid(), 0.0, xi.dt(), std::move(frames)};
}

FieldPath evolve_linear(const OperatorHandle& L, const ScalarField& psi0,
                        const Eigen::MatrixXd& increments, double dt, double t0, double t_end) {
  check_evolution_grids(L, psi0, L.grid());
  if (increments.rows() != L.grid().size()) {
    throw InvalidInput("increment rows do not match grid");
  }
  const HorizonMap hm = map_horizon(t0, static_cast<int>(increments.cols()), dt, t_end);
  Eigen::MatrixXd frames =
      evolve_frames(L, psi0.values, dt, hm.first_step, hm.steps,
                    [&](int k) { return Eigen::VectorXd(increments.col(k)); }, true);
  return FieldPath{L.grid(), 0.0, dt, std::move(frames)};
}

ScalarField evolve_linear_final(const OperatorHandle& L, const ScalarField& psi0,
                                const NoiseRealisation& xi, double t_end) {
  check_evolution_grids(L, psi0, xi.grid());
  const HorizonMap hm = map_horizon(xi.t_start(), xi.steps(), xi.dt(), t_end);
  Eigen::MatrixXd frames =
      evolve_frames(L, psi0.values, xi.dt(), hm.first_step, hm.steps,
                    [&](int k) { return xi.increment(k); }, false);
  return ScalarField::from_vector(L.grid(), frames.col(0));
}

RenormalisationProfile renormalisation_constant(const CovarianceKernel& sigma) {
  if (sigma.eps1 != sigma.eps2) {
    throw InvalidInput("renormalisation profile needs a diagonal (eps, eps) kernel");
  }
  RenormalisationProfile profile;
  profile.grid = sigma.grid;
  profile.delta = sigma.delta;
  profile.epsilon = sigma.eps1;
  profile.method = sigma.method;
  profile.values = sigma.matrix.diagonal();
  check_strictly_positive(profile.values, "renormalisation profile");
  return profile;
}

RenormalisationProfile comparison_profile(const PeriodicCoefficient& a, double eps, double delta,
                                          const OperatorHandle& op_zero) {
  if (!(eps > 0.0)) throw InvalidInput("invalid scale: comparison profile needs eps > 0");
  if (op_zero.epsilon() != 0.0) {
    throw InvalidInput("the anchor operator must be the homogenised (eps = 0) one");
  }
  const Corrector chi = solve_corrector(a);
  const HomogenisedMatrix hm = homogenised_matrix(a, chi);

  std::optional<Mollification> moll;
  if (delta != 0.0) moll = Mollification{delta, MollifyMethod::kHeatKernel};
  const RenormalisationProfile c0 = stationary_variance_profile(op_zero, moll);
  const double scale = std::sqrt(hm.a_hat.determinant()) * c0.values.mean();

  const DomainGrid& grid = op_zero.grid();
  RenormalisationProfile profile;
  profile.grid = grid;
  profile.delta = delta;
  profile.epsilon = eps;
  profile.method = "comparison";
  profile.scale = scale;
  profile.values.resize(grid.size());
  for (int j = 0; j < grid.n; ++j) {
    for (int i = 0; i < grid.n; ++i) {
      const double det = evaluate_scaled(a, eps, grid.coord(i), grid.coord(j)).determinant();
      profile.values[grid.index(i, j)] = scale / std::sqrt(det);
    }
  }
  check_strictly_positive(profile.values, "comparison profile");
  return profile;
}

RenormalisationProfile comparison_profile(const DomainGrid& grid, const PeriodicCoefficient& a,
                                          double eps, double delta) {
  const OperatorHandle op_zero = OperatorHandle::assemble(grid, a, 0.0);
  return comparison_profile(a, eps, delta, op_zero);
}

double hermite(int m, double x, double c) {
  if (m < 0) throw InvalidInput("Hermite order must be nonnegative");
  if (m == 0) return 1.0;
  double prev = 1.0;  // H_0
  double cur = x;     // H_1
  for (int k = 1; k < m; ++k) {
    const double next = x * cur - k * c * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

WickPowerField wick_power(const ScalarField& psi, int m, const RenormalisationProfile& c) {
  if (!(psi.grid == c.grid)) throw InvalidInput("field and profile live on different grids");
  if (m < 0 || m > 7) throw InvalidInput("chaos order outside the supported range 0..7");
  WickPowerField out;
  out.order = m;
  out.values = ScalarField::zero(psi.grid);
  for (int k = 0; k < psi.grid.size(); ++k) {
    out.values.values[k] = hermite(m, psi.values[k], c.values[k]);
  }
  return out;
}

double wick_moment_oracle(int m, const CovarianceKernel& rho, const ScalarField& f,
                          const ScalarField& g) {
  if (!(f.grid == rho.grid) || !(g.grid == rho.grid)) {
    throw InvalidInput("test functions live on a different grid");
  }
  if (m < 0 || m > 7) throw InvalidInput("chaos order outside the supported range 0..7");
  static constexpr std::array<double, 8> factorial = {1, 1, 2, 6, 24, 120, 720, 5040};
  const int size = rho.grid.size();
  const double h2 = rho.grid.h * rho.grid.h;
  std::vector<double> per_column(static_cast<std::size_t>(size));
  for (int y = 0; y < size; ++y) {
    const double* col = rho.matrix.data() + static_cast<std::ptrdiff_t>(y) * size;
    double inner = 0.0;
    for (int x = 0; x < size; ++x) {
      double p = 1.0;
      for (int k = 0; k < m; ++k) p *= col[x];
      inner += f.values[x] * p;
    }
    per_column[static_cast<std::size_t>(y)] = g.values[y] * inner;
  }
  return factorial[static_cast<std::size_t>(m)] * h2 * h2 * pairwise_sum(per_column);
}

void dump_kernel(const CovarianceKernel& kernel, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot open kernel dump for writing: " + path);
  out.put('K');
  binio::put_u64(out, static_cast<std::uint64_t>(kernel.grid.n));
  binio::put_f64(out, kernel.eps1);
  binio::put_f64(out, kernel.eps2);
  binio::put_f64(out, kernel.delta);
  for (int x = 0; x < kernel.matrix.rows(); ++x) {
    for (int y = 0; y < kernel.matrix.cols(); ++y) {
      binio::put_f64(out, kernel.matrix(x, y));
    }
  }
  if (!out) throw NumericalError("kernel dump write failed: " + path);
}

CovarianceKernel load_kernel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open kernel dump: " + path);
  const int type = in.get();
  if (type != 'K') throw InvalidInput("not a kernel dump (bad type byte)");
  CovarianceKernel kernel;
  const auto n = static_cast<int>(binio::get_u64(in));
  kernel.grid = DomainGrid::make(n);
  kernel.eps1 = binio::get_f64(in);
  kernel.eps2 = binio::get_f64(in);
  kernel.delta = binio::get_f64(in);
  kernel.method = "loaded";
  kernel.matrix.resize(kernel.grid.size(), kernel.grid.size());
  for (int x = 0; x < kernel.matrix.rows(); ++x) {
    for (int y = 0; y < kernel.matrix.cols(); ++y) {
      kernel.matrix(x, y) = binio::get_f64(in);
    }
  }
  return kernel;
}

void export_profile_csv(const RenormalisationProfile& profile, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open profile CSV for writing: " + path);
  out << "i,j,value\n";
  out.precision(17);
  for (int j = 0; j < profile.grid.n; ++j) {
    for (int i = 0; i < profile.grid.n; ++i) {
      out << i << ',' << j << ',' << profile.values[profile.grid.index(i, j)] << '\n';
    }
  }
  if (!out) throw NumericalError("profile CSV write failed: " + path);
}

}  // namespace phihom
