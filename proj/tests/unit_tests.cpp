#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
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

using namespace phihom;

namespace {

ScalarField bump_field(const DomainGrid& grid, double scale, double amplitude) {
  ScalarField f = ScalarField::zero(grid);
  for (int j = 0; j < grid.n; ++j) {
    for (int i = 0; i < grid.n; ++i) {
      f.at(i, j) =
          amplitude * mother_bump((grid.coord(i) - 0.5) / scale, (grid.coord(j) - 0.5) / scale);
    }
  }
  return f;
}

ScalarField counter_field(const DomainGrid& grid, std::uint64_t seed, std::uint64_t stream) {
  ScalarField f = ScalarField::zero(grid);
  for (int a = 0; a < grid.size(); ++a) {
    f.values[a] = counter_gaussian(seed, stream, 0, static_cast<std::uint64_t>(a));
  }
  return f;
}

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

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

// ---------------------------------------------------------------------------
TEST_SUITE("util") {
  TEST_CASE("pairwise sum matches a plain accumulation") {
    std::vector<double> xs(100000);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = std::sin(0.1 * static_cast<double>(i));
    double plain = 0.0;
    for (double x : xs) plain += x;
    CHECK(pairwise_sum(xs) == doctest::Approx(plain).epsilon(1e-12));
  }

  TEST_CASE("fnv1a64 reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  }

  TEST_CASE("student t quantiles decrease toward the normal") {
    CHECK(student_t_975(1) > student_t_975(2));
    CHECK(student_t_975(2) > student_t_975(10));
    CHECK(student_t_975(10000) == doctest::Approx(1.959964).epsilon(1e-3));
  }

  TEST_CASE("counter gaussian is a pure function") {
    CHECK(counter_gaussian(1, 2, 3, 4) == counter_gaussian(1, 2, 3, 4));
    CHECK(counter_gaussian(1, 2, 3, 4) != counter_gaussian(1, 2, 3, 5));
  }
}

// ---------------------------------------------------------------------------
TEST_SUITE("cell") {
  TEST_CASE("laminate corrector: exact nodal slopes") {
    const int m = 16;
    const PeriodicCoefficient a = make_laminate(1, 1.0, 4.0, m);
    const Corrector chi = solve_corrector(a);

    // chi_2 vanishes identically and chi_1 is constant along axis 2.
    CHECK(chi.chi2.cwiseAbs().maxCoeff() <= 1e-10);
    for (int j = 1; j < m; ++j) {
      CHECK(std::abs(chi.chi1[j * m + 3] - chi.chi1[3]) <= 1e-9);
    }

    // Discrete flux is the harmonic mean 1.6 exactly, so the nodal slope is
    // +0.6/m in the low band, -0.6/m in the high band, 0 across interfaces.
    const auto diff = [&](int i) { return chi.chi1[(i + 1) % m] - chi.chi1[i]; };
    CHECK(diff(2) == doctest::Approx(0.6 / m).epsilon(1e-8));
    CHECK(diff(11) == doctest::Approx(-0.6 / m).epsilon(1e-8));
    CHECK(std::abs(diff(m / 2 - 1)) <= 1e-9);  // low -> high interface
  }

  TEST_CASE("laminate homogenised matrix hits the harmonic/arithmetic means") {
    const PeriodicCoefficient a = make_laminate(1, 1.0, 4.0, 32);
    const HomogenisedMatrix hm = homogenised_matrix(a, solve_corrector(a));
    CHECK(hm.a_hat(0, 0) == doctest::Approx(1.6).epsilon(1e-8));
    CHECK(hm.a_hat(1, 1) == doctest::Approx(2.5).epsilon(1e-8));
    CHECK(std::abs(hm.a_hat(0, 1)) <= 1e-9);
  }

  TEST_CASE("constant coefficient: zero corrector, a_hat = a") {
    Eigen::Matrix2d c;
    c << 2.0, 0.3, 0.3, 1.5;
    const PeriodicCoefficient a = make_constant(c);
    const Corrector chi = solve_corrector(a);
    CHECK(chi.chi1.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(chi.chi2.cwiseAbs().maxCoeff() <= 1e-12);
    const HomogenisedMatrix hm = homogenised_matrix(a, chi);
    CHECK((hm.a_hat - c).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("checker preset satisfies the Voigt-Reuss bracket") {
    const PeriodicCoefficient a = make_smooth_checker(4.0, 64);
    const HomogenisedMatrix hm = homogenised_matrix(a, solve_corrector(a));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> hi(hm.voigt - hm.a_hat);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> lo(hm.a_hat - hm.reuss);
    CHECK(hi.eigenvalues().minCoeff() >= -1e-8);
    CHECK(lo.eigenvalues().minCoeff() >= -1e-8);
  }

  TEST_CASE("laminate wants an even resolution") {
    CHECK_THROWS_AS(make_laminate(1, 1.0, 4.0, 33), InvalidInput);
  }

  TEST_CASE("mean inverse sqrt determinant of the laminate is 0.625") {
    const PeriodicCoefficient a = make_laminate(1, 1.0, 4.0, 64);
    CHECK(a.mean_inverse_sqrt_det() == doctest::Approx(0.625).epsilon(1e-12));
  }
}

// ---------------------------------------------------------------------------
TEST_SUITE("operators") {
  TEST_CASE("identity coefficients give the 5-point Dirichlet spectrum") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op = OperatorHandle::assemble_constant(grid, Eigen::Matrix2d::Identity());
    std::vector<double> expected;
    const double h = grid.h;
    for (int k = 1; k <= grid.n; ++k) {
      for (int l = 1; l <= grid.n; ++l) {
        const double sk = std::sin(0.5 * M_PI * k * h);
        const double sl = std::sin(0.5 * M_PI * l * h);
        expected.push_back(-(4.0 / (h * h)) * (sk * sk + sl * sl));
      }
    }
    std::sort(expected.begin(), expected.end());
    const Eigen::VectorXd& lambda = op.eigenvalues();
    REQUIRE(lambda.size() == static_cast<int>(expected.size()));
    for (int i = 0; i < lambda.size(); ++i) {
      CHECK(lambda[i] == doctest::Approx(expected[i]).epsilon(1e-9));
    }
  }

  TEST_CASE("semigroup composes") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op = OperatorHandle::assemble(grid, make_laminate(1, 1.0, 4.0, 16), 0.25);
    const Eigen::VectorXd f = counter_field(grid, 5, 1).values;
    const Eigen::VectorXd once = op.apply_semigroup(0.3, f);
    const Eigen::VectorXd twice = op.apply_semigroup(0.1, op.apply_semigroup(0.2, f));
    CHECK((once - twice).cwiseAbs().maxCoeff() <= 1e-10 * f.cwiseAbs().maxCoeff());
  }

  TEST_CASE("Crank-Nicolson route tracks an exact discrete mode beyond the budget") {
    const DomainGrid grid = DomainGrid::make(97);  // beyond the dense budget
    const OperatorHandle op = OperatorHandle::assemble_constant(grid, Eigen::Matrix2d::Identity());
    CHECK_FALSE(op.within_eigen_budget());
    const double h = grid.h;
    const double s1 = std::sin(0.5 * M_PI * h);
    const double lambda1 = -(8.0 / (h * h)) * s1 * s1;
    ScalarField mode = ScalarField::zero(grid);
    for (int j = 0; j < grid.n; ++j) {
      for (int i = 0; i < grid.n; ++i) {
        mode.at(i, j) = std::sin(M_PI * grid.coord(i)) * std::sin(M_PI * grid.coord(j));
      }
    }
    const double t = 0.05;
    const Eigen::VectorXd evolved = op.apply_semigroup(t, mode.values);
    const Eigen::VectorXd exact = std::exp(lambda1 * t) * mode.values;
    CHECK((evolved - exact).norm() <= 5e-3 * exact.norm());
  }

  TEST_CASE("solve_shifted inverts I - cL") {
    const DomainGrid grid = DomainGrid::make(9);
    const OperatorHandle op = OperatorHandle::assemble(grid, make_laminate(2, 1.0, 4.0, 20), 0.2);
    const Eigen::VectorXd rhs = counter_field(grid, 6, 2).values;
    const Eigen::VectorXd x = op.solve_shifted(0.01, rhs);
    const Eigen::VectorXd back = x - 0.01 * (op.matrix() * x);
    CHECK((back - rhs).cwiseAbs().maxCoeff() <= 1e-10 * rhs.cwiseAbs().maxCoeff());
  }

  TEST_CASE("commensurability errors suggest admissible scales") {
    const DomainGrid grid = DomainGrid::make(15);
    try {
      check_commensurate(grid, 0.2);
      FAIL("expected InvalidInput");
    } catch (const InvalidInput& e) {
      const std::string what = e.what();
      CHECK(what.find("admissible") != std::string::npos);
    }
    const std::vector<double> eps = admissible_epsilons(grid);
    CHECK(std::find(eps.begin(), eps.end(), 0.25) != eps.end());
    CHECK(std::find(eps.begin(), eps.end(), 0.0625) == eps.end());  // one node per period
  }

  TEST_CASE("green bounds: sub-Markov, symmetric, nonnegative") {
    const DomainGrid grid = DomainGrid::make(15);
    const PeriodicCoefficient a = make_laminate(1, 1.0, 4.0, 16);
    const OperatorHandle ope = OperatorHandle::assemble(grid, a, 0.25);
    const HomogenisedMatrix hm = homogenised_matrix(a, solve_corrector(a));
    const OperatorHandle op0 = OperatorHandle::assemble_constant(grid, hm.a_hat);
    const GreenBoundsRow row = verify_green_bounds(ope, op0, 0.05);
    CHECK(row.mass_max <= 1.0 + 1e-8);
    CHECK(row.symmetry_defect <= 1e-10);
    CHECK(row.min_value >= -1e-8 * row.max_value);
    CHECK(std::isfinite(row.pointwise_stat));
    CHECK(std::isfinite(row.difference_stat));
  }

  TEST_CASE("semigroup difference norm vanishes for identical operators") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op = OperatorHandle::assemble(grid, make_laminate(1, 1.0, 4.0, 16), 0.25);
    CHECK(semigroup_difference_norm(op, op, 0.3).norm <= 1e-14);
  }

  TEST_CASE("gradient energy scales quadratically") {
    const DomainGrid grid = DomainGrid::make(9);
    ScalarField f = bump_field(grid, 0.4, 1.0);
    const double e1 = dirichlet_gradient_energy(f);
    ScalarField g = f;
    g.values *= 2.0;
    CHECK(e1 > 0.0);
    CHECK(dirichlet_gradient_energy(g) == doctest::Approx(4.0 * e1).epsilon(1e-12));
    CHECK(dirichlet_gradient_energy(ScalarField::zero(grid)) == 0.0);
  }
}

// ---------------------------------------------------------------------------
TEST_SUITE("noise") {
  TEST_CASE("same seed and stream regenerate bit-identically") {
    const DomainGrid grid = DomainGrid::make(7);
    const NoiseRealisation a(grid, 0.01, 0.0, 0.05, 11, 3);
    const NoiseRealisation b(grid, 0.01, 0.0, 0.05, 11, 3);
    const NoiseRealisation c(grid, 0.01, 0.0, 0.05, 11, 4);
    CHECK((a.increment(2) - b.increment(2)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.increment(2) - c.increment(2)).cwiseAbs().maxCoeff() > 0.0);
  }

  TEST_CASE("step offset realises an exact time shift") {
    const DomainGrid grid = DomainGrid::make(7);
    const NoiseRealisation base(grid, 0.01, 0.0, 0.10, 21, 0);
    const NoiseRealisation shifted(grid, 0.01, 0.0, 0.05, 21, 0, 3);
    CHECK((shifted.increment(0) - base.increment(3)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((shifted.increment(4) - base.increment(7)).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("increments carry the white-noise scale") {
    const DomainGrid grid = DomainGrid::make(15);
    const double dt = 0.01;
    const NoiseRealisation xi(grid, dt, 0.0, 0.1, 31);
    double sum_sq = 0.0;
    int count = 0;
    for (int k = 0; k < xi.steps(); ++k) {
      sum_sq += xi.increment(k).squaredNorm();
      count += grid.size();
    }
    const double target = 1.0 / (dt * grid.h * grid.h);
    CHECK(sum_sq / count == doctest::Approx(target).epsilon(0.05));
  }

  TEST_CASE("isometry holds within Monte Carlo error") {
    const DomainGrid grid = DomainGrid::make(7);
    const NoiseRealisation base(grid, 0.02, 0.0, 0.1, 41);
    Eigen::MatrixXd f(grid.size(), base.steps());
    for (int c = 0; c < f.cols(); ++c) {
      f.col(c) = counter_field(grid, 90 + static_cast<std::uint64_t>(c), 1).values;
    }
    const IsometryReport report = verify_isometry(base, f, f, 2000);
    CHECK(std::abs(report.empirical - report.target) <= 3.0 * report.standard_error);
  }

  TEST_CASE("dump and reload round-trips bit-exactly") {
    const DomainGrid grid = DomainGrid::make(7);
    const NoiseRealisation xi(grid, 0.01, 0.0, 0.05, 51, 9);
    const auto path = temp_file("unit_noise.bin");
    dump_noise(xi, path.string());
    const NoiseRealisation back = load_noise(path.string());
    CHECK(back.seed() == xi.seed());
    CHECK(back.stream_id() == xi.stream_id());
    CHECK(back.steps() == xi.steps());
    CHECK((back.increment(1) - xi.increment(1)).cwiseAbs().maxCoeff() == 0.0);
    std::filesystem::remove(path);
  }

  TEST_CASE("heat-kernel mollification consumes the stated margin") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op =
        OperatorHandle::assemble_constant(grid, Eigen::Matrix2d::Identity());
    const double dt = 0.001;
    const double delta = 0.1;  // delta^2 = 10 dt -> margin 9 steps each side
    const NoiseRealisation xi(grid, dt, 0.0, 0.05, 61);
    const MollifiedNoise m = mollify_heat_kernel(xi, delta, op);
    const int margin = static_cast<int>(std::ceil(delta * delta / dt)) - 1;
    CHECK(m.margin_steps == margin);
    CHECK(m.values.cols() == xi.steps() - 2 * margin);
    CHECK(m.t_start == doctest::Approx(margin * dt));

    const NoiseRealisation tiny(grid, dt, 0.0, 0.01, 61);
    CHECK_THROWS_AS(mollify_heat_kernel(tiny, 0.25, op), InvalidInput);
  }
}

// ---------------------------------------------------------------------------
TEST_SUITE("gaussian") {
  TEST_CASE("stationary mode weight closed form") {
    CHECK(stationary_mode_weight(-1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(stationary_mode_weight(-4.0, 0.25) == doctest::Approx(0.5).epsilon(1e-14));
  }

  TEST_CASE("mollifier symbol normalised at zero and decaying") {
    CHECK(mollifier_symbol(0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mollifier_symbol(-1.0) < 1.0);
    CHECK(mollifier_symbol(-50.0) < mollifier_symbol(-1.0));
    CHECK(mollifier_symbol(-50.0) > 0.0);
  }

  TEST_CASE("stationary covariance solves the Lyapunov identity") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op = OperatorHandle::assemble(grid, make_laminate(1, 1.0, 4.0, 16), 0.25);
    const CovarianceKernel sigma = stationary_covariance(op);
    const Eigen::MatrixXd lhs = op.matrix() * sigma.matrix + sigma.matrix * op.matrix().transpose();
    const double h2 = grid.h * grid.h;
    const Eigen::MatrixXd rhs = -Eigen::MatrixXd::Identity(grid.size(), grid.size()) / h2;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-8 * rhs.cwiseAbs().maxCoeff());
  }

  TEST_CASE("variance profile equals the kernel diagonal") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op = OperatorHandle::assemble(grid, make_laminate(2, 1.0, 4.0, 16), 0.25);
    const CovarianceKernel sigma = stationary_covariance(op);
    const RenormalisationProfile prof = stationary_variance_profile(op);
    CHECK((prof.values - sigma.matrix.diagonal()).cwiseAbs().maxCoeff() <= 1e-10);
    const RenormalisationProfile rc = renormalisation_constant(sigma);
    CHECK((rc.values - prof.values).cwiseAbs().maxCoeff() <= 1e-10);
  }

  TEST_CASE("cross covariance degenerates to the stationary kernel") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op = OperatorHandle::assemble(grid, make_laminate(1, 1.0, 4.0, 16), 0.25);
    const CovarianceKernel direct = stationary_covariance(op);
    const CovarianceKernel crossed = cross_covariance(op, op);
    CHECK((direct.matrix - crossed.matrix).cwiseAbs().maxCoeff() <=
          1e-10 * direct.matrix.cwiseAbs().maxCoeff());
  }

  TEST_CASE("cross covariance transposes under swapping") {
    const DomainGrid grid = DomainGrid::make(7);
    const PeriodicCoefficient a = make_laminate(1, 1.0, 4.0, 16);
    const OperatorHandle ope = OperatorHandle::assemble(grid, a, 0.25);
    const HomogenisedMatrix hm = homogenised_matrix(a, solve_corrector(a));
    const OperatorHandle op0 = OperatorHandle::assemble_constant(grid, hm.a_hat);
    const CovarianceKernel ab = cross_covariance(ope, op0);
    const CovarianceKernel ba = cross_covariance(op0, ope);
    CHECK((ab.matrix - ba.matrix.transpose()).cwiseAbs().maxCoeff() <=
          1e-10 * ab.matrix.cwiseAbs().maxCoeff());
  }

  TEST_CASE("hermite reference values") {
    CHECK(hermite(2, 2.0, 1.0) == doctest::Approx(3.0));   // x^2 - C
    CHECK(hermite(3, 2.0, 1.0) == doctest::Approx(2.0));   // x^3 - 3Cx
    CHECK(hermite(4, 1.0, 1.0) == doctest::Approx(-2.0));  // x^4 - 6Cx^2 + 3C^2
    CHECK(hermite(1, 0.7, 2.0) == doctest::Approx(0.7));
    CHECK(hermite(0, 0.7, 2.0) == doctest::Approx(1.0));
  }

  TEST_CASE("Appell shift identity") {
    // H_m(x + a; C) = sum_k binom(m, k) a^{m-k} H_k(x; C): the identity the
    // forcing construction leans on.
    const double cvar = 0.8;
    for (int m = 1; m <= 5; ++m) {
      for (int trial = 0; trial < 10; ++trial) {
        const double x = counter_gaussian(7, 1, static_cast<std::uint64_t>(trial), 0);
        const double a = counter_gaussian(7, 2, static_cast<std::uint64_t>(trial), 1);
        double sum = 0.0;
        double binom = 1.0;
        for (int k = m; k >= 0; --k) {
          sum += binom * std::pow(a, m - k) * hermite(k, x, cvar);
          binom *= static_cast<double>(k) / static_cast<double>(m - k + 1);
        }
        CHECK(hermite(m, x + a, cvar) ==
              doctest::Approx(sum).epsilon(1e-10).scale(std::abs(sum) + 1.0));
      }
    }
  }

  TEST_CASE("wick moment oracle on the identity kernel") {
    const DomainGrid grid = DomainGrid::make(2);  // h = 1/3, 4 nodes
    CovarianceKernel rho;
    rho.grid = grid;
    rho.method = "unit-test";
    rho.matrix = Eigen::MatrixXd::Identity(4, 4);
    ScalarField one = ScalarField::zero(grid);
    one.values.setOnes();
    // m! * sum_a h^4 = m! * 4/81.
    CHECK(wick_moment_oracle(1, rho, one, one) == doctest::Approx(4.0 / 81.0).epsilon(1e-12));
    CHECK(wick_moment_oracle(2, rho, one, one) == doctest::Approx(8.0 / 81.0).epsilon(1e-12));
    CHECK(wick_moment_oracle(3, rho, one, one) == doctest::Approx(24.0 / 81.0).epsilon(1e-12));
  }

  TEST_CASE("wick power rejects unsupported orders") {
    const DomainGrid grid = DomainGrid::make(3);
    const ScalarField f = ScalarField::zero(grid);
    CHECK_THROWS_AS(wick_power(f, 8, zero_profile(grid)), InvalidInput);
  }

  TEST_CASE("stationary sampler reproduces the kernel") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op = OperatorHandle::assemble(grid, make_laminate(1, 1.0, 4.0, 16), 0.25);
    const CovarianceKernel sigma = stationary_covariance(op);
    const StationarySampler sampler(sigma);
    const int reps = 3000;
    Eigen::MatrixXd emp = Eigen::MatrixXd::Zero(grid.size(), grid.size());
    for (int r = 0; r < reps; ++r) {
      const Eigen::VectorXd x = sampler.draw(17, static_cast<std::uint64_t>(r)).values;
      emp.noalias() += x * x.transpose();
    }
    emp /= reps;
    CHECK((emp - sigma.matrix).norm() <= 0.15 * sigma.matrix.norm());
  }

  TEST_CASE("linear evolution marches through a negative start time") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op = OperatorHandle::assemble(grid, make_laminate(1, 1.0, 4.0, 16), 0.25);
    const double dt = 0.01;
    const NoiseRealisation xi(grid, dt, -0.05, 0.04, 71);  // five burn-in steps
    const FieldPath path = evolve_linear(op, ScalarField::zero(grid), xi, 0.04);
    REQUIRE(path.steps() == 4);

    Eigen::VectorXd u = Eigen::VectorXd::Zero(grid.size());
    for (int k = 0; k < 5; ++k) u = op.solve_shifted(dt, (u + dt * xi.increment(k)).eval());
    CHECK((path.frames.col(0) - u).cwiseAbs().maxCoeff() == 0.0);
    for (int k = 5; k < 9; ++k) u = op.solve_shifted(dt, (u + dt * xi.increment(k)).eval());
    CHECK((path.frames.col(4) - u).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("burn-in reaches the stationary variance") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op = OperatorHandle::assemble(grid, make_laminate(1, 1.0, 4.0, 16), 0.25);
    const RenormalisationProfile prof = stationary_variance_profile(op);
    const double dt = 0.005;
    const int reps = 800;
    double mean_sq = 0.0;
    for (int r = 0; r < reps; ++r) {
      const NoiseRealisation xi(grid, dt, -0.3, dt, 81, static_cast<std::uint64_t>(r));
      const ScalarField psi = evolve_linear_final(op, ScalarField::zero(grid), xi, dt);
      mean_sq += psi.values.squaredNorm() / grid.size();
    }
    mean_sq /= reps;
    // The semi-implicit stationary variance differs from the continuum one
    // by O(dt lambda) per mode; 15% covers both that bias and MC noise.
    CHECK(mean_sq == doctest::Approx(prof.values.mean()).epsilon(0.15));
  }

  TEST_CASE("kernel dump round-trips and rejects foreign files") {
    const DomainGrid grid = DomainGrid::make(5);
    const OperatorHandle op = OperatorHandle::assemble_constant(grid, Eigen::Matrix2d::Identity());
    const CovarianceKernel sigma = stationary_covariance(op);
    const auto path = temp_file("unit_kernel.bin");
    dump_kernel(sigma, path.string());
    const CovarianceKernel back = load_kernel(path.string());
    CHECK((back.matrix - sigma.matrix).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.eps1 == sigma.eps1);
    {
      std::ofstream junk(path, std::ios::binary);
      junk << "not a kernel";
    }
    CHECK_THROWS_AS(load_kernel(path.string()), InvalidInput);
    std::filesystem::remove(path);
  }
}

// ---------------------------------------------------------------------------
TEST_SUITE("besov") {
  TEST_CASE("mother bump normalisation and support") {
    CHECK(mother_bump(0.0, 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(mother_bump(1.0, 0.0) == 0.0);
    CHECK(mother_bump(0.8, 0.7) == 0.0);
    CHECK(mother_bump(0.5, 0.0) > 0.0);
  }

  TEST_CASE("dyadic family on a 32^2 grid has three scales") {
    const DomainGrid grid = DomainGrid::make(31);  // h = 1/32, lambda_min >= 4h = 1/8
    const TestFamily family = TestFamily::dyadic(grid);
    REQUIRE(family.scales.size() == 3);
    CHECK(family.scales[0] == doctest::Approx(0.5));
    CHECK(family.scales[2] == doctest::Approx(0.125));
    for (std::size_t s = 0; s < family.scales.size(); ++s) {
      CHECK_FALSE(family.centres[s].empty());
      for (const TestFamily::Centre& c : family.centres[s]) {
        CHECK(grid.coord(c.i) >= family.scales[s] - 1e-12);
        CHECK(grid.coord(c.i) <= 1.0 - family.scales[s] + 1e-12);
      }
    }
  }

  TEST_CASE("pairing with the constant field is scale-invariant") {
    const DomainGrid grid = DomainGrid::make(63);
    ScalarField one = ScalarField::zero(grid);
    one.values.setOnes();
    const double coarse = pair_with_test(one, 0.5, 0.5, 0.5);
    const double fine = pair_with_test(one, 0.5, 0.5, 0.25);
    CHECK(coarse == doctest::Approx(fine).epsilon(0.02));
  }

  TEST_CASE("pairing rejects supports that stick out") {
    const DomainGrid grid = DomainGrid::make(15);
    const ScalarField f = ScalarField::zero(grid);
    CHECK_THROWS_AS(pair_with_test(f, 0.1, 0.5, 0.25), InvalidInput);
  }

  TEST_CASE("negative-Holder norm is homogeneous and monotone in alpha") {
    const DomainGrid grid = DomainGrid::make(31);
    const TestFamily family = TestFamily::dyadic(grid);
    const ScalarField f = counter_field(grid, 3, 9);
    ScalarField g = f;
    g.values *= 2.0;
    const BesovEstimate e1 = neg_holder_norm(f, -0.3, family);
    const BesovEstimate e2 = neg_holder_norm(g, -0.3, family);
    CHECK(e2.value == doctest::Approx(2.0 * e1.value).epsilon(1e-12));
    CHECK(neg_holder_norm(f, -0.6, family).value <= e1.value + 1e-12);
    CHECK(e1.value > 0.0);
  }

  TEST_CASE("fractional Sobolev norm basics") {
    const DomainGrid grid = DomainGrid::make(15);
    const GagliardoKernel kernel(grid, 0.98, 8.0);
    CHECK(fractional_sobolev_norm(ScalarField::zero(grid), kernel) == 0.0);
    const ScalarField f = bump_field(grid, 0.4, 1.0);
    const double n1 = fractional_sobolev_norm(f, kernel);
    ScalarField g = f;
    g.values *= 2.0;
    CHECK(fractional_sobolev_norm(g, kernel) == doctest::Approx(2.0 * n1).epsilon(1e-10));
    CHECK_THROWS_AS(GagliardoKernel(grid, 1.5, 8.0), InvalidInput);
  }

  TEST_CASE("interpolation and GN inequality sweeps stay bounded") {
    const DomainGrid grid = DomainGrid::make(15);
    std::vector<ScalarField> fields;
    fields.push_back(bump_field(grid, 0.3, 1.0));
    fields.push_back(bump_field(grid, 0.45, 2.0));
    fields.push_back(counter_field(grid, 13, 5));
    const InequalityReport b11 = verify_B11_interpolation(fields, 0.5);
    CHECK(b11.all_finite);
    CHECK(b11.max_ratio < 100.0);
    const InequalityReport gn = verify_fractional_GN(fields, 0.98, 8.0);
    CHECK(gn.all_finite);
    CHECK(gn.max_ratio < 100.0);
  }
}

// ---------------------------------------------------------------------------
TEST_SUITE("dynamics") {
  TEST_CASE("half-degree is validated") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op = OperatorHandle::assemble_constant(grid, Eigen::Matrix2d::Identity());
    const FieldPath psi = zero_path(grid, 0.01, 5);
    CHECK_THROWS_AS(build_forcings(psi, ScalarField::zero(grid), op, zero_profile(grid), 4),
                    InvalidInput);
  }

  TEST_CASE("top forcing level is identically one") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op = OperatorHandle::assemble(grid, make_laminate(1, 1.0, 4.0, 16), 0.25);
    const double dt = 0.01;
    const NoiseRealisation xi(grid, dt, 0.0, 0.05, 91);
    const FieldPath psi = evolve_linear(op, ScalarField::zero(grid), xi, 0.05);
    const RenormalisationProfile c = stationary_variance_profile(op);
    const ScalarField u0 = bump_field(grid, 0.4, 0.3);
    const ForcingSet f = build_forcings(psi, u0, op, c, 2);
    REQUIRE(f.g.size() == 4);
    CHECK((f.g.back().array() - 1.0).abs().maxCoeff() == 0.0);
    CHECK(f.provenance.find("wick powers") != std::string::npos);
  }

  TEST_CASE("zero data stays zero") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op = OperatorHandle::assemble_constant(grid, Eigen::Matrix2d::Identity());
    const FieldPath psi = zero_path(grid, 0.01, 10);
    const ForcingSet f = build_forcings(psi, ScalarField::zero(grid), op, zero_profile(grid), 2);
    const RemainderPath y = solve_remainder(op, f, 2, 0.1, 0.01);
    CHECK(y.y.cwiseAbs().maxCoeff() == 0.0);
    CHECK(y.x_tau == 0.0);
  }

  TEST_CASE("degree-one reduction converges to the damped heat flow at first order") {
    const DomainGrid grid = DomainGrid::make(9);
    const OperatorHandle op = OperatorHandle::assemble(grid, make_laminate(1, 1.0, 4.0, 20), 0.2);
    const ScalarField u0 = bump_field(grid, 0.4, 1.0);
    const double t_end = 0.1;
    // With n = 1, psi = 0, C = 0 the remainder equation is du/dt = Lu - u,
    // whose exact solution is e^{-t} e^{tL} u0.
    const Eigen::VectorXd exact = std::exp(-t_end) * op.apply_semigroup(t_end, u0.values);
    auto march = [&](double dt) {
      const int steps = static_cast<int>(std::lround(t_end / dt));
      const FieldPath psi = zero_path(grid, dt, steps);
      const ForcingSet f = build_forcings(psi, u0, op, zero_profile(grid), 1);
      const RemainderPath y = solve_remainder(op, f, 1, t_end, dt);
      const FieldPath u = assemble_remainder(u0, op, y);
      return Eigen::VectorXd(u.frames.col(u.steps()));
    };
    const double err1 = (march(1e-3) - exact).norm();
    const double err2 = (march(5e-4) - exact).norm();
    CHECK(err1 <= 0.15 * exact.norm());
    CHECK(err1 / err2 == doctest::Approx(2.0).epsilon(0.25));  // first order in dt
  }

  TEST_CASE("energy table m = 1 equals the squared L2 norm") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op = OperatorHandle::assemble_constant(grid, Eigen::Matrix2d::Identity());
    const double dt = 0.01;
    const NoiseRealisation xi(grid, dt, 0.0, 0.05, 101);
    const FieldPath psi = evolve_linear(op, bump_field(grid, 0.4, 1.0), xi, 0.05);
    const EnergyDiagnostics diag = energy_diagnostics(psi, {1}, 2);
    REQUIRE(diag.rows.size() == static_cast<std::size_t>(psi.steps()) + 1);
    for (std::size_t r = 0; r < diag.rows.size(); ++r) {
      const double direct =
          psi.frames.col(static_cast<int>(r)).squaredNorm() * grid.h * grid.h;
      CHECK(diag.rows[r].lp_pow == doctest::Approx(direct).epsilon(1e-12));
      CHECK(diag.rows[r].m == 1);
    }
    double max_abs = 0.0;
    for (int j = 0; j <= psi.steps(); ++j) {
      max_abs = std::max(max_abs, psi.frames.col(j).cwiseAbs().maxCoeff());
    }
    CHECK(diag.x_tau >= max_abs);
  }

  TEST_CASE("blow-up aborts with a time-stamped error") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op = OperatorHandle::assemble_constant(grid, Eigen::Matrix2d::Identity());
    ScalarField huge = ScalarField::zero(grid);
    huge.values.setConstant(2000.0);
    const int steps = 20;
    const FieldPath psi = zero_path(grid, 0.05, steps);
    const ForcingSet f = build_forcings(psi, huge, op, zero_profile(grid), 2);
    try {
      solve_remainder(op, f, 2, 1.0, 0.05);  // dt u^2 = 200: wildly unstable
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("blow-up at t =") != std::string::npos);
    }
  }

  TEST_CASE("forcings must share the march grid") {
    const DomainGrid grid = DomainGrid::make(7);
    const OperatorHandle op = OperatorHandle::assemble_constant(grid, Eigen::Matrix2d::Identity());
    const FieldPath psi = zero_path(grid, 0.01, 10);
    const ForcingSet f = build_forcings(psi, ScalarField::zero(grid), op, zero_profile(grid), 2);
    CHECK_THROWS_AS(solve_remainder(op, f, 2, 0.1, 0.02), InvalidInput);
  }

  TEST_CASE("path dump round-trips") {
    const DomainGrid grid = DomainGrid::make(5);
    FieldPath path = zero_path(grid, 0.25, 3);
    path.frames.setRandom();
    std::stringstream buf;
    dump_path(path, buf);
    const FieldPath back = load_path(buf);
    CHECK(back.dt == path.dt);
    CHECK(back.steps() == path.steps());
    CHECK((back.frames - path.frames).cwiseAbs().maxCoeff() == 0.0);
    std::stringstream junk("XYZT");
    CHECK_THROWS_AS(load_path(junk), InvalidInput);
  }
}

// ---------------------------------------------------------------------------
TEST_SUITE("bench") {
  TEST_CASE("rate fit recovers an exact power law") {
    const std::vector<std::pair<double, double>> pts = {
        {0.25, 3.0 * 0.25}, {0.125, 3.0 * 0.125}, {0.0625, 3.0 * 0.0625}, {0.03125, 3.0 * 0.03125}};
    const RateFit fit = fit_rate(pts, RateModel::kPurePower);
    CHECK(fit.slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.ci_half_width <= 1e-10);
    CHECK(fit.points_used == 4);
    CHECK_FALSE(fit.zeros_excluded);
  }

  TEST_CASE("rate fit recovers an exact power-log law") {
    std::vector<std::pair<double, double>> pts;
    for (double eps : {0.25, 0.125, 0.0625, 0.03125}) {
      pts.emplace_back(eps, 2.0 * eps * std::abs(std::log(eps)));
    }
    const RateFit fit = fit_rate(pts, RateModel::kPowerLog);
    CHECK(fit.slope == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("zeros are excluded and flagged") {
    const std::vector<std::pair<double, double>> pts = {
        {0.25, 0.5}, {0.125, 0.25}, {0.0625, 0.125}, {0.03125, 0.0}};
    const RateFit fit = fit_rate(pts, RateModel::kPurePower);
    CHECK(fit.zeros_excluded);
    CHECK(fit.points_used == 3);
    CHECK(fit.slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(fit_rate({{0.25, 1.0}, {0.125, 0.5}}, RateModel::kPurePower), InvalidInput);
    CHECK_THROWS_AS(fit_rate({{1.5, 1.0}, {0.5, 1.0}, {0.25, 1.0}}, RateModel::kPurePower),
                    InvalidInput);
  }

  TEST_CASE("canonical config: sorted keys, out_dir excluded, seed included") {
    ExperimentConfig a;
    ExperimentConfig b = a;
    b.out_dir = "elsewhere";
    CHECK(config_hash(a) == config_hash(b));
    b.seed = 2;
    CHECK(config_hash(a) != config_hash(b));
    const std::string canon = canonical_config(a);
    CHECK(canon.find("preset = laminate\n") != std::string::npos);
    CHECK(canon.find("out_dir") == std::string::npos);
    // Round-trip every entry through apply_config_entry.
    ExperimentConfig c;
    c.preset = "checker";
    c.eps_ladder = {0.5};
    for (const auto& [key, value] : config_entries(a)) apply_config_entry(c, key, value);
    CHECK(canonical_config(c) == canon);
    CHECK_THROWS_AS(apply_config_entry(c, "no_such_key", "1"), InvalidInput);
  }

  TEST_CASE("ladder context: rungs sorted, anchor present, misses rejected") {
    const PeriodicCoefficient a = make_laminate(1, 1.0, 4.0, 16);
    const LadderContext ctx(a, 15, {0.125, 0.5, 0.25});
    CHECK(ctx.ladder() == std::vector<double>{0.5, 0.25, 0.125});
    CHECK(ctx.op(0.0).epsilon() == 0.0);
    CHECK(ctx.op(0.25).epsilon() == doctest::Approx(0.25));
    CHECK_THROWS_AS(ctx.op(0.3), InvalidInput);
    CHECK_THROWS_AS(LadderContext(a, 15, {0.25, 0.25}), InvalidInput);
    CHECK(ctx.homogenised().a_hat(0, 0) == doctest::Approx(1.6).epsilon(1e-6));
  }

  TEST_CASE("constant preset collapses every kernel experiment to zero") {
    Eigen::Matrix2d c;
    c << 2.0, 0.0, 0.0, 1.5;
    const LadderContext ctx(make_constant(c), 15, {0.5, 0.25, 0.125});
    const ConvergenceReport sg = run_semigroup_difference(ctx, 0.1);
    CHECK(sg.passed);
    for (const RungStat& rung : sg.rungs) CHECK(rung.value <= 1e-13);
    const std::vector<ConvergenceReport> wick =
        run_wick_convergence(ctx, {2}, default_test_function(ctx.grid()), 0.02);
    CHECK(wick[0].passed);
    for (const RungStat& rung : wick[0].rungs) CHECK(rung.value == 0.0);
  }

  TEST_CASE("manifest persists and reloads; tampering is caught") {
    ExperimentConfig config;
    config.grid_n = 15;
    config.eps_ladder = {0.5, 0.25};
    config.seed = 123;
    const RunManifest manifest = make_manifest(config, {"dt", "kappa"});
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "unit_manifest";
    fs::remove_all(dir);
    persist_report({}, nullptr, manifest, dir.string());
    const RunManifest back = load_manifest(dir.string());
    CHECK(back.hash == manifest.hash);
    CHECK(canonical_config(back.config) == canonical_config(config));
    CHECK(back.defaults_applied == std::vector<std::string>{"dt", "kappa"});

    std::string text;
    {
      std::ifstream in(dir / "manifest.json");
      std::ostringstream buf;
      buf << in.rdbuf();
      text = buf.str();
    }
    const std::string needle = "\"seed\": \"123\"";
    REQUIRE(text.find(needle) != std::string::npos);
    text.replace(text.find(needle), needle.size(), "\"seed\": \"124\"");
    std::ofstream(dir / "manifest.json", std::ios::binary) << text;
    CHECK_THROWS_AS(load_manifest(dir.string()), InvalidInput);

    fs::remove_all(dir);
    try {
      load_manifest(dir.string());
      FAIL("expected InvalidInput");
    } catch (const InvalidInput& e) {
      CHECK(std::string(e.what()).find("missing manifest") != std::string::npos);
    }
  }

  TEST_CASE("experiment coefficient validates the preset") {
    ExperimentConfig config;
    config.preset = "perforated";
    try {
      experiment_coefficient(config);
      FAIL("expected InvalidInput");
    } catch (const InvalidInput& e) {
      CHECK(std::string(e.what()).find("laminate") != std::string::npos);
    }
  }

  TEST_CASE("default test function is an interior bump") {
    const DomainGrid grid = DomainGrid::make(15);
    const ScalarField f = default_test_function(grid);
    CHECK(f.values.maxCoeff() > 0.9);
    CHECK(f.values[grid.index(0, 0)] == 0.0);
  }
}

// ---------------------------------------------------------------------------
TEST_SUITE("config") {
  TEST_CASE("INI parsing with fractions, defaults tracking") {
    const auto path = temp_file("unit_config.ini");
    {
      std::ofstream out(path);
      out << "# comment\n"
          << "[grid]\n"
          << "n = 15\n"
          << "[ladder]\n"
          << "eps = 1/2 1/4 ; trailing comment\n"
          << "[dynamics]\n"
          << "dt = 0.005\n"
          << "[statistics]\n"
          << "seed = 9\n";
    }
    const ParsedConfig pc = parse_config(path.string());
    CHECK(pc.config.grid_n == 15);
    CHECK(pc.config.eps_ladder == std::vector<double>{0.5, 0.25});
    CHECK(pc.config.dt == doctest::Approx(0.005));
    CHECK(pc.config.seed == 9);
    CHECK(std::find(pc.overrides.begin(), pc.overrides.end(), "grid_n") != pc.overrides.end());
    CHECK(std::find(pc.defaults_applied.begin(), pc.defaults_applied.end(), "kappa") !=
          pc.defaults_applied.end());
    CHECK(std::find(pc.defaults_applied.begin(), pc.defaults_applied.end(), "grid_n") ==
          pc.defaults_applied.end());
    std::filesystem::remove(path);
  }

  TEST_CASE("unknown keys name the valid alternatives") {
    const auto path = temp_file("unit_config_bad.ini");
    {
      std::ofstream out(path);
      out << "[grid]\nm = 15\n";
    }
    try {
      parse_config(path.string());
      FAIL("expected InvalidInput");
    } catch (const InvalidInput& e) {
      const std::string what = e.what();
      CHECK(what.find("unknown key") != std::string::npos);
      CHECK(what.find("valid keys: n") != std::string::npos);
    }
    std::filesystem::remove(path);
  }

  TEST_CASE("duplicate keys and unknown sections are rejected") {
    const auto path = temp_file("unit_config_dup.ini");
    {
      std::ofstream out(path);
      out << "[grid]\nn = 15\nn = 31\n";
    }
    CHECK_THROWS_AS(parse_config(path.string()), InvalidInput);
    {
      std::ofstream out(path);
      out << "[plotting]\nstyle = fancy\n";
    }
    try {
      parse_config(path.string());
      FAIL("expected InvalidInput");
    } catch (const InvalidInput& e) {
      CHECK(std::string(e.what()).find("valid sections") != std::string::npos);
    }
    std::filesystem::remove(path);
  }

  TEST_CASE("incommensurate ladders fail with suggestions") {
    const auto path = temp_file("unit_config_eps.ini");
    {
      std::ofstream out(path);
      out << "[grid]\nn = 15\n[ladder]\neps = 1/5 1/10 1/20\n";
    }
    try {
      parse_config(path.string());
      FAIL("expected InvalidInput");
    } catch (const InvalidInput& e) {
      CHECK(std::string(e.what()).find("admissible") != std::string::npos);
    }
    std::filesystem::remove(path);
  }

  TEST_CASE("cross-field validation") {
    ExperimentConfig config;
    config.kappa = 1.5;
    CHECK_THROWS_AS(validate_config(config), InvalidInput);
    config.kappa = 0.02;
    config.delta_ladder = {0.6};
    CHECK_THROWS_AS(validate_config(config), InvalidInput);
    config.delta_ladder = {0.125};
    config.grid_n = 63;
    validate_config(config);  // the defaults are admissible at n = 63
  }
}
