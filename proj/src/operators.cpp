#include "phihom/operators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/SparseCholesky>

#include "phihom/eig.hpp"
#include "phihom/errors.hpp"
#include "phihom/util.hpp"

namespace phihom {

namespace {

double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

// Either a frozen constant matrix or the oscillatory field a(x/eps).
struct Sampler {
  const PeriodicCoefficient* field = nullptr;
  double eps = 0.0;
  Eigen::Matrix2d constant = Eigen::Matrix2d::Identity();
  bool diagonal = true;

  Eigen::Matrix2d at(double x1, double x2) const {
    if (field == nullptr) return constant;
    return evaluate_scaled(*field, eps, x1, x2);
  }
};

Eigen::SparseMatrix<double> assemble_matrix(const DomainGrid& grid, const Sampler& s) {
  const int n = grid.n;
  const double h = grid.h;
  const int size = grid.size();
  const double inv_h2 = 1.0 / (h * h);

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(size) * (s.diagonal ? 5 : 13));

  // Energy form E(u, u) = sum_edges c_e (Du)^2 (+ mixed term); L = -E / h^2.
  // grid.coord extends naturally to the boundary: coord(-1) = 0, coord(n) = 1,
  // where fields vanish.
  auto add_edge = [&](int pa, int pb, double c) {
    const double w = c * inv_h2;
    if (pa >= 0) trips.emplace_back(pa, pa, -w);
    if (pb >= 0) trips.emplace_back(pb, pb, -w);
    if (pa >= 0 && pb >= 0) {
      trips.emplace_back(pa, pb, w);
      trips.emplace_back(pb, pa, w);
    }
  };

  // x-edges: edge e of row j joins nodes (e-1, j) and (e, j); harmonic mean
  // of a11 at the two endpoints.
  for (int j = 0; j < n; ++j) {
    const double y = grid.coord(j);
    for (int e = 0; e <= n; ++e) {
      const double c = harmonic(s.at(grid.coord(e - 1), y)(0, 0), s.at(grid.coord(e), y)(0, 0));
      add_edge(e > 0 ? grid.index(e - 1, j) : -1, e < n ? grid.index(e, j) : -1, c);
    }
  }
  // y-edges with a22.
  for (int i = 0; i < n; ++i) {
    const double x = grid.coord(i);
    for (int e = 0; e <= n; ++e) {
      const double c = harmonic(s.at(x, grid.coord(e - 1))(1, 1), s.at(x, grid.coord(e))(1, 1));
      add_edge(e > 0 ? grid.index(i, e - 1) : -1, e < n ? grid.index(i, e) : -1, c);
    }
  }

  if (!s.diagonal) {
    // Cross term: per cell centre, c12 [(G_x u)(G_y u) + (G_y u)(G_x u)] h^2
    // with centred gradients G over the four corners. Corner order
    // (p00, p10, p01, p11); boundary corners carry the value 0.
    constexpr int sx[4] = {-1, 1, -1, 1};
    constexpr int sy[4] = {-1, -1, 1, 1};
    for (int cj = 0; cj <= n; ++cj) {
      for (int ci = 0; ci <= n; ++ci) {
        const int pi[4] = {ci - 1, ci, ci - 1, ci};
        const int pj[4] = {cj - 1, cj - 1, cj, cj};
        double c12 = 0.0;
        for (int k = 0; k < 4; ++k) {
          c12 += s.at(grid.coord(pi[k]), grid.coord(pj[k]))(0, 1);
        }
        c12 *= 0.25;
        if (c12 == 0.0) continue;
        int idx[4];
        for (int k = 0; k < 4; ++k) {
          const bool interior = pi[k] >= 0 && pi[k] < n && pj[k] >= 0 && pj[k] < n;
          idx[k] = interior ? grid.index(pi[k], pj[k]) : -1;
        }
        for (int al = 0; al < 4; ++al) {
          if (idx[al] < 0) continue;
          for (int be = 0; be < 4; ++be) {
            if (idx[be] < 0) continue;
            const double e = 0.25 * c12 * (sx[al] * sy[be] + sy[al] * sx[be]);
            if (e != 0.0) trips.emplace_back(idx[al], idx[be], -e * inv_h2);
          }
        }
      }
    }
  }

  Eigen::SparseMatrix<double> L(size, size);
  L.setFromTriplets(trips.begin(), trips.end());
  L.makeCompressed();
  return L;
}

}  // namespace

void check_commensurate(const DomainGrid& grid, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw InvalidInput("invalid scale: eps must be positive and finite");
  }
  const double inv = 1.0 / eps;
  const long periods = std::lround(inv);
  const bool integer = periods >= 1 && std::abs(inv - static_cast<double>(periods)) <= 1e-9 * inv;
  if (!integer || (grid.n + 1) % periods != 0 || (grid.n + 1) / periods < 2) {
    std::ostringstream msg;
    msg << "invalid scale: eps = " << eps << " is not commensurate with the n = " << grid.n
        << " grid (need 1/eps dividing n+1 = " << grid.n + 1
        << " with at least 2 nodes per period); admissible:";
    for (double e : admissible_epsilons(grid)) {
      msg << " 1/" << std::lround(1.0 / e);
    }
    throw InvalidInput(msg.str());
  }
}

std::vector<double> admissible_epsilons(const DomainGrid& grid) {
  std::vector<double> out;
  for (int periods = 1; periods <= (grid.n + 1) / 2; ++periods) {
    if ((grid.n + 1) % periods == 0) out.push_back(1.0 / periods);
  }
  return out;
}

struct OperatorHandle::Impl {
  DomainGrid grid;
  double eps = 0.0;
  Eigen::SparseMatrix<double> L;

  using Factor = Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>;
  mutable std::mutex mutex;
  mutable std::unique_ptr<SymmetricEigensystem> eig;
  mutable std::map<std::uint64_t, std::shared_ptr<Factor>> factors;

  const SymmetricEigensystem& eigensystem() const {
    std::lock_guard lock(mutex);
    if (!eig) {
      if (grid.n > kEigenBudget) {
        std::ostringstream msg;
        msg << "unsupported resolution: n = " << grid.n
            << " exceeds the dense eigendecomposition budget n <= " << kEigenBudget;
        throw InvalidInput(msg.str());
      }
      SymmetricEigensystem es = symmetric_eigensystem(Eigen::MatrixXd(L));
      if (!(es.lambda.maxCoeff() < 0.0)) {
        throw NumericalError("assumption violation: elliptic operator is not negative definite");
      }
      eig = std::make_unique<SymmetricEigensystem>(std::move(es));
    }
    return *eig;
  }
};

OperatorHandle OperatorHandle::assemble(const DomainGrid& grid, const PeriodicCoefficient& a,
                                        double eps) {
  if (grid.n < 2 || grid.h <= 0.0) throw InvalidInput("invalid grid");
  if (eps == 0.0) {
    const Corrector chi = solve_corrector(a);
    const HomogenisedMatrix hm = homogenised_matrix(a, chi);
    return assemble_constant(grid, hm.a_hat);
  }
  check_commensurate(grid, eps);
  Sampler s;
  s.field = &a;
  s.eps = eps;
  s.diagonal = a.is_diagonal();
  auto impl = std::make_shared<Impl>();
  impl->grid = grid;
  impl->eps = eps;
  impl->L = assemble_matrix(grid, s);
  OperatorHandle h;
  h.impl_ = std::move(impl);
  return h;
}

OperatorHandle OperatorHandle::assemble_constant(const DomainGrid& grid,
                                                 const Eigen::Matrix2d& a) {
  if (grid.n < 2 || grid.h <= 0.0) throw InvalidInput("invalid grid");
  if (!a.allFinite() || std::abs(a(0, 1) - a(1, 0)) > 1e-12 * (1.0 + a.norm())) {
    throw InvalidInput("constant coefficient must be finite and symmetric");
  }
  if (!(a(0, 0) > 0.0 && a.determinant() > 0.0)) {
    throw NumericalError("assumption violation: constant coefficient is not positive definite");
  }
  Sampler s;
  s.constant = 0.5 * (a + a.transpose());
  s.diagonal = s.constant(0, 1) == 0.0;
  auto impl = std::make_shared<Impl>();
  impl->grid = grid;
  impl->eps = 0.0;
  impl->L = assemble_matrix(grid, s);
  OperatorHandle h;
  h.impl_ = std::move(impl);
  return h;
}

const DomainGrid& OperatorHandle::grid() const { return impl_->grid; }
double OperatorHandle::epsilon() const { return impl_->eps; }
const Eigen::SparseMatrix<double>& OperatorHandle::matrix() const { return impl_->L; }
bool OperatorHandle::within_eigen_budget() const { return impl_->grid.n <= kEigenBudget; }
const Eigen::VectorXd& OperatorHandle::eigenvalues() const { return impl_->eigensystem().lambda; }
const Eigen::MatrixXd& OperatorHandle::eigenvectors() const {
  return impl_->eigensystem().vectors;
}

Eigen::VectorXd OperatorHandle::apply_semigroup(double t, const Eigen::VectorXd& f) const {
  const Impl& im = *impl_;
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw InvalidInput("semigroup time must be nonnegative and finite");
  }
  if (f.size() != im.grid.size()) throw InvalidInput("field size does not match grid");
  if (t == 0.0) return f;
  if (im.grid.n <= kEigenBudget) {
    const SymmetricEigensystem& es = im.eigensystem();
    Eigen::VectorXd w = es.vectors.transpose() * f;
    w.array() *= (es.lambda.array() * t).exp();
    return es.vectors * w;
  }
  // Beyond the dense budget: Crank-Nicolson sub-stepping (trapezoidal, second
  // order; the shifted factor is cached, so repeated applies stay cheap).
  // Rannacher start-up: the first two steps are each taken as two implicit-
  // Euler half steps.  Plain Crank-Nicolson only marginally damps modes with
  // |lambda| dt >> 1, so rough input would otherwise leak through the march,
  // while the true semigroup annihilates it.
  constexpr double kTargetStep = 2.5e-3;
  const int substeps = std::max(1, static_cast<int>(std::ceil(t / kTargetStep)));
  const double dt = t / substeps;
  const int smoothed = std::min(substeps, 2);
  Eigen::VectorXd u = f;
  for (int k = 0; k < smoothed; ++k) {
    u = solve_shifted(0.5 * dt, u);
    u = solve_shifted(0.5 * dt, u);
  }
  for (int k = smoothed; k < substeps; ++k) {
    const Eigen::VectorXd rhs = u + 0.5 * dt * (im.L * u);
    u = solve_shifted(0.5 * dt, rhs);
  }
  return u;
}

Eigen::VectorXd OperatorHandle::solve_shifted(double c, const Eigen::VectorXd& rhs) const {
  const Impl& im = *impl_;
  if (!(c > 0.0) || !std::isfinite(c)) throw InvalidInput("shift must be positive and finite");
  if (rhs.size() != im.grid.size()) throw InvalidInput("field size does not match grid");
  std::shared_ptr<Impl::Factor> factor;
  {
    std::lock_guard lock(im.mutex);
    auto& slot = im.factors[std::bit_cast<std::uint64_t>(c)];
    if (!slot) {
      Eigen::SparseMatrix<double> identity(im.grid.size(), im.grid.size());
      identity.setIdentity();
      const Eigen::SparseMatrix<double> shifted = identity - c * im.L;
      auto fresh = std::make_shared<Impl::Factor>();
      fresh->compute(shifted);
      if (fresh->info() != Eigen::Success) {
        throw NumericalError("factorisation of the shifted operator failed");
      }
      slot = std::move(fresh);
    }
    factor = slot;
  }
  Eigen::VectorXd x = factor->solve(rhs);
  if (factor->info() != Eigen::Success) throw NumericalError("shifted solve failed");
  return x;
}

ScalarField green_column(const OperatorHandle& op, double t, int iy, int jy) {
  const DomainGrid& g = op.grid();
  if (iy < 0 || iy >= g.n || jy < 0 || jy >= g.n) throw InvalidInput("source node outside grid");
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(g.size());
  delta[g.index(iy, jy)] = 1.0 / (g.h * g.h);
  return ScalarField::from_vector(g, op.apply_semigroup(t, delta));
}

Eigen::MatrixXd green_kernel(const OperatorHandle& op, double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw InvalidInput("kernel time must be positive");
  const DomainGrid& g = op.grid();
  const Eigen::VectorXd weights = (op.eigenvalues().array() * t).exp();
  const Eigen::MatrixXd scaled = op.eigenvectors() * weights.asDiagonal();
  return (scaled * op.eigenvectors().transpose()) / (g.h * g.h);
}

GreenBoundsRow verify_green_bounds(const DomainGrid& grid, double eps, double t,
                                   const Eigen::MatrixXd& kernel_eps,
                                   const Eigen::MatrixXd& kernel_zero) {
  const int n = grid.n;
  const int size = grid.size();
  const double h = grid.h;
  if (kernel_eps.rows() != size || kernel_eps.cols() != size || kernel_zero.rows() != size ||
      kernel_zero.cols() != size) {
    throw InvalidInput("kernel dimensions do not match grid");
  }
  if (!(t > 0.0)) throw InvalidInput("kernel time must be positive");

  GreenBoundsRow row;
  row.eps = eps;
  row.t = t;
  const double rt = std::sqrt(t);
  const double diff_scale = eps > 0.0 ? 1.0 / std::sqrt(eps) : 0.0;

  std::vector<double> c1(size), c2(size);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      c1[grid.index(i, j)] = grid.coord(i);
      c2[grid.index(i, j)] = grid.coord(j);
    }
  }

  auto cube = [](double v) { return v * v * v; };
  double pw = 0.0, gr = 0.0, df = 0.0;
  for (int q = 0; q < size; ++q) {
    const double* col_eps = kernel_eps.data() + static_cast<std::ptrdiff_t>(q) * size;
    const double* col_zero = kernel_zero.data() + static_cast<std::ptrdiff_t>(q) * size;
    const double y1 = c1[q];
    const double y2 = c2[q];
    int i = 0, j = 0;
    for (int p = 0; p < size; ++p) {
      const double d1 = c1[p] - y1;
      const double d2 = c2[p] - y2;
      const double d = std::sqrt(d1 * d1 + d2 * d2);
      pw = std::max(pw, std::abs(col_eps[p]) * (rt + d) * (rt + d));
      df = std::max(df, std::abs(col_eps[p] - col_zero[p]) * cube(d + rt) * diff_scale);
      if (i + 1 < n) {
        // forward x-difference, distance taken from the face midpoint
        const double g = (col_eps[p + 1] - col_eps[p]) / h;
        const double m1 = d1 + 0.5 * h;
        gr = std::max(gr, std::abs(g) * cube(rt + std::sqrt(m1 * m1 + d2 * d2)));
      }
      if (j + 1 < n) {
        const double g = (col_eps[p + n] - col_eps[p]) / h;
        const double m2 = d2 + 0.5 * h;
        gr = std::max(gr, std::abs(g) * cube(rt + std::sqrt(d1 * d1 + m2 * m2)));
      }
      if (++i == n) {
        i = 0;
        ++j;
      }
    }
  }
  row.pointwise_stat = pw;
  row.gradient_stat = gr;
  row.difference_stat = df;
  row.mass_max = (kernel_eps.rowwise().sum() * h * h).maxCoeff();
  row.min_value = kernel_eps.minCoeff();
  row.max_value = kernel_eps.maxCoeff();
  const double scale = std::max(std::abs(row.min_value), std::abs(row.max_value));
  row.symmetry_defect =
      scale > 0.0 ? (kernel_eps - kernel_eps.transpose()).cwiseAbs().maxCoeff() / scale : 0.0;
  return row;
}

GreenBoundsRow verify_green_bounds(const OperatorHandle& op_eps, const OperatorHandle& op_zero,
                                   double t) {
  if (op_eps.grid() != op_zero.grid()) throw InvalidInput("operators live on different grids");
  const Eigen::MatrixXd kernel_eps = green_kernel(op_eps, t);
  const Eigen::MatrixXd kernel_zero = green_kernel(op_zero, t);
  return verify_green_bounds(op_eps.grid(), op_eps.epsilon(), t, kernel_eps, kernel_zero);
}

OperatorNormResult semigroup_difference_norm(const OperatorHandle& a, const OperatorHandle& b,
                                             double t, double tol, int max_iterations) {
  if (a.grid() != b.grid()) throw InvalidInput("operators live on different grids");
  if (!(t >= 0.0)) throw InvalidInput("semigroup time must be nonnegative");
  if (!(tol > 0.0) || max_iterations < 1) throw InvalidInput("invalid Lanczos controls");
  const int size = a.grid().size();

  // Deterministic pseudo-random start vector.
  Eigen::VectorXd v(size);
  for (int k = 0; k < size; ++k) {
    v[k] = uniform01(mix64(0x5EED0D1FFULL ^ static_cast<std::uint64_t>(k))) - 0.5;
  }
  v /= v.norm();

  const auto apply = [&](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(a.apply_semigroup(t, x) - b.apply_semigroup(t, x));
  };

  OperatorNormResult result;
  std::vector<Eigen::VectorXd> basis;
  std::vector<double> alpha, beta;  // tridiagonal entries
  basis.push_back(v);
  double prev_norm = 0.0;
  for (int it = 1; it <= max_iterations; ++it) {
    Eigen::VectorXd w = apply(basis.back());
    const double aj = basis.back().dot(w);
    alpha.push_back(aj);
    w -= aj * basis.back();
    if (basis.size() > 1) w -= beta.back() * basis[basis.size() - 2];
    for (const Eigen::VectorXd& q : basis) w -= q.dot(w) * q;  // reorthogonalise

    // Extreme eigenvalue of the current tridiagonal Rayleigh quotient.
    const int m = static_cast<int>(alpha.size());
    Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      tri(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < m) {
        tri(i, i + 1) = tri(i + 1, i) = beta[static_cast<std::size_t>(i)];
      }
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri, Eigen::EigenvaluesOnly);
    const double mu = es.eigenvalues().cwiseAbs().maxCoeff();
    result.iterations = it;
    result.norm = mu;

    const double bj = w.norm();
    if (bj <= tol * std::max(mu, 1e-300)) {  // invariant subspace found
      result.converged = true;
      return result;
    }
    if (it > 2 && std::abs(mu - prev_norm) <= tol * mu) {
      result.converged = true;
      return result;
    }
    prev_norm = mu;
    beta.push_back(bj);
    basis.push_back(w / bj);
  }
  return result;
}

double dirichlet_gradient_energy(const ScalarField& u) {
  const DomainGrid& g = u.grid;
  const int n = g.n;
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(2 * n * (n + 1)));
  for (int j = 0; j < n; ++j) {
    for (int e = 0; e <= n; ++e) {
      const double left = e > 0 ? u.at(e - 1, j) : 0.0;
      const double right = e < n ? u.at(e, j) : 0.0;
      terms.push_back((right - left) * (right - left));
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int e = 0; e <= n; ++e) {
      const double lower = e > 0 ? u.at(i, e - 1) : 0.0;
      const double upper = e < n ? u.at(i, e) : 0.0;
      terms.push_back((upper - lower) * (upper - lower));
    }
  }
  return pairwise_sum(terms);
}

}  // namespace phihom
