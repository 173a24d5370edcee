#include "phihom/cell.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "phihom/errors.hpp"

namespace phihom {

namespace {

double harm(double x, double y) { return 2.0 * x * y / (x + y); }

// Sign patterns of the centre-based gradients over the four corner nodes
// (p00, p10, p01, p11) of a dual cell; G = pattern / (2 hc).
constexpr double kSx[4] = {-1.0, 1.0, -1.0, 1.0};
constexpr double kSy[4] = {-1.0, -1.0, 1.0, 1.0};

void project_mean_zero(Eigen::VectorXd& v) { v.array() -= v.mean(); }

struct CgResult {
  Eigen::VectorXd x;
  double relative_residual;
  std::vector<double> history;
};

CgResult cg_mean_zero(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                      double tol, int max_iterations) {
  const Eigen::Index n = b.size();
  Eigen::VectorXd diag = A.diagonal();
  const double mean_diag = diag.mean();
  for (Eigen::Index i = 0; i < n; ++i) diag[i] = std::max(diag[i], 0.1 * mean_diag);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = b;
  project_mean_zero(r);
  const double bnorm = r.norm();
  CgResult out;
  if (bnorm == 0.0) {
    out.x = x;
    out.relative_residual = 0.0;
    return out;
  }
  Eigen::VectorXd z = r.cwiseQuotient(diag);
  project_mean_zero(z);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  Eigen::VectorXd Ap(n);
  for (int it = 0; it < max_iterations; ++it) {
    Ap.noalias() = A * p;
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) {
      throw SolverFailure("cell CG: direction with non-positive curvature (matrix not PSD on "
                          "mean-zero subspace)",
                          out.history);
    }
    const double alpha = rz / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    project_mean_zero(r);
    const double res = r.norm() / bnorm;
    out.history.push_back(res);
    if (res <= tol) {
      project_mean_zero(x);
      out.x = std::move(x);
      out.relative_residual = res;
      return out;
    }
    z = r.cwiseQuotient(diag);
    project_mean_zero(z);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  throw SolverFailure("cell CG: no convergence to tol = " + std::to_string(tol) + " within " +
                      std::to_string(max_iterations) + " iterations (last relative residual " +
                      std::to_string(out.history.empty() ? 1.0 : out.history.back()) + ")",
                      out.history);
}

// Edge / centre coefficient tables for the discrete energy.
struct EdgeData {
  int m;
  double hc;
  Eigen::VectorXd c11;  // x-edge (i,j) -> (i+1,j), index j*m+i
  Eigen::VectorXd c22;  // y-edge (i,j) -> (i,j+1)
  Eigen::VectorXd c12;  // centre (i+1/2, j+1/2)
  bool has_mixed;
};

EdgeData edge_data(const PeriodicCoefficient& a) {
  const int m = a.resolution();
  EdgeData e;
  e.m = m;
  e.hc = 1.0 / m;
  e.c11.resize(m * m);
  e.c22.resize(m * m);
  e.c12.resize(m * m);
  e.has_mixed = !a.is_diagonal();
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      const int ip = (i + 1) % m;
      const int jp = (j + 1) % m;
      const int k = j * m + i;
      e.c11[k] = harm(a.a11(i, j), a.a11(ip, j));
      e.c22[k] = harm(a.a22(i, j), a.a22(i, jp));
      e.c12[k] = 0.25 * (a.a12(i, j) + a.a12(ip, j) + a.a12(i, jp) + a.a12(ip, jp));
    }
  }
  return e;
}

}  // namespace

CellSystem build_cell_system(const PeriodicCoefficient& a) {
  const EdgeData e = edge_data(a);
  const int m = e.m;
  const int size = m * m;
  const double hc = e.hc;
  auto idx = [m](int i, int j) { return ((j % m + m) % m) * m + ((i % m + m) % m); };

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(size) * (e.has_mixed ? 20 : 8));
  Eigen::VectorXd b1 = Eigen::VectorXd::Zero(size);
  Eigen::VectorXd b2 = Eigen::VectorXd::Zero(size);

  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      const int k = j * m + i;
      // x-edge (i,j)-(i+1,j): energy c11 (u_b - u_a)(v_b - v_a)
      {
        const int pa = idx(i, j), pb = idx(i + 1, j);
        const double c = e.c11[k];
        trips.emplace_back(pa, pa, c);
        trips.emplace_back(pb, pb, c);
        trips.emplace_back(pa, pb, -c);
        trips.emplace_back(pb, pa, -c);
        // l_1(v) x-edge part: hc * c11 * (v_b - v_a); b = -l
        b1[pb] -= hc * c;
        b1[pa] += hc * c;
      }
      // y-edge (i,j)-(i,j+1)
      {
        const int pa = idx(i, j), pb = idx(i, j + 1);
        const double c = e.c22[k];
        trips.emplace_back(pa, pa, c);
        trips.emplace_back(pb, pb, c);
        trips.emplace_back(pa, pb, -c);
        trips.emplace_back(pb, pa, -c);
        b2[pb] -= hc * c;
        b2[pa] += hc * c;
      }
      if (e.has_mixed) {
        // centre (i+1/2, j+1/2): c12 [Gx u Gy v + Gy u Gx v] hc^2
        const double c = e.c12[k];
        if (c != 0.0) {
          const int p[4] = {idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1)};
          for (int al = 0; al < 4; ++al) {
            for (int be = 0; be < 4; ++be) {
              trips.emplace_back(p[al], p[be], 0.25 * c * (kSx[al] * kSy[be] + kSy[al] * kSx[be]));
            }
            // l_1 centre part: c12 * Gy v * hc^2 = (hc/2) c12 * sy-pattern
            b1[p[al]] -= 0.5 * hc * c * kSy[al];
            // l_2 centre part: c12 * Gx v * hc^2
            b2[p[al]] -= 0.5 * hc * c * kSx[al];
          }
        }
      }
    }
  }

  CellSystem sys;
  sys.A.resize(size, size);
  sys.A.setFromTriplets(trips.begin(), trips.end());
  sys.A.makeCompressed();
  sys.b1 = std::move(b1);
  sys.b2 = std::move(b2);
  return sys;
}

Corrector solve_corrector(const PeriodicCoefficient& a, double tol, int max_iterations) {
  if (!(tol > 0.0)) {
    throw InvalidInput("invalid tolerance: solve_corrector needs tol > 0");
  }
  const int m = a.resolution();
  if (max_iterations <= 0) max_iterations = 30 * m + 1000;
  const CellSystem sys = build_cell_system(a);

  Corrector chi;
  chi.resolution = m;
  CgResult r1 = cg_mean_zero(sys.A, sys.b1, tol, max_iterations);
  CgResult r2 = cg_mean_zero(sys.A, sys.b2, tol, max_iterations);
  chi.chi1 = std::move(r1.x);
  chi.chi2 = std::move(r2.x);
  chi.relative_residual1 = r1.relative_residual;
  chi.relative_residual2 = r2.relative_residual;
  chi.residual_history1 = std::move(r1.history);
  chi.residual_history2 = std::move(r2.history);
  return chi;
}

HomogenisedMatrix homogenised_matrix(const PeriodicCoefficient& a, const Corrector& chi) {
  const int m = a.resolution();
  if (chi.resolution != m || chi.chi1.size() != m * m || chi.chi2.size() != m * m) {
    throw InvalidInput("corrector/coefficient resolution mismatch in homogenised_matrix");
  }
  const EdgeData e = edge_data(a);
  const double hc = e.hc;
  const double w = hc * hc;  // each edge/centre carries cell-measure hc^2
  auto idx = [m](int i, int j) { return ((j % m + m) % m) * m + ((i % m + m) % m); };

  // a_hat[k][l] accumulated through the flux form B(e_k, e_l + grad chi_l).
  Eigen::Matrix2d ah = Eigen::Matrix2d::Zero();
  const Eigen::VectorXd* chis[2] = {&chi.chi1, &chi.chi2};
  for (int l = 0; l < 2; ++l) {
    const Eigen::VectorXd& c = *chis[l];
    const double e1 = (l == 0) ? 1.0 : 0.0;
    const double e2 = (l == 1) ? 1.0 : 0.0;
    double s1 = 0.0, s2 = 0.0;
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < m; ++i) {
        const int k = j * m + i;
        const double dx = (c[idx(i + 1, j)] - c[idx(i, j)]) / hc;
        const double dy = (c[idx(i, j + 1)] - c[idx(i, j)]) / hc;
        s1 += e.c11[k] * (e1 + dx);
        s2 += e.c22[k] * (e2 + dy);
        if (e.has_mixed) {
          const double gx = (c[idx(i + 1, j)] + c[idx(i + 1, j + 1)] - c[idx(i, j)] -
                             c[idx(i, j + 1)]) /
                            (2 * hc);
          const double gy = (c[idx(i, j + 1)] + c[idx(i + 1, j + 1)] - c[idx(i, j)] -
                             c[idx(i + 1, j)]) /
                            (2 * hc);
          s1 += e.c12[k] * (e2 + gy);
          s2 += e.c12[k] * (e1 + gx);
        }
      }
    }
    ah(0, l) = w * s1;
    ah(1, l) = w * s2;
  }

  HomogenisedMatrix out;
  const double scale = ah.cwiseAbs().maxCoeff();
  out.asymmetry = std::abs(ah(0, 1) - ah(1, 0)) / scale;
  out.a_hat = 0.5 * (ah + ah.transpose());
  out.voigt = a.arithmetic_mean();
  out.reuss = a.harmonic_mean();

  // SPD + Voigt-Reuss bracket in quadratic-form order, allowing round-off
  // plus solver-residual slack.
  auto min_eig = [](const Eigen::Matrix2d& s) {
    const double mean = 0.5 * (s(0, 0) + s(1, 1));
    const double rad =
        std::sqrt(0.25 * (s(0, 0) - s(1, 1)) * (s(0, 0) - s(1, 1)) + s(0, 1) * s(1, 0));
    return mean - rad;
  };
  if (!(min_eig(out.a_hat) > 0.0)) {
    throw NumericalError("homogenised matrix failed to be positive definite");
  }
  const double slack = 1e-8 * scale;
  if (min_eig(out.voigt - out.a_hat) < -slack || min_eig(out.a_hat - out.reuss) < -slack) {
    throw NumericalError("homogenised matrix violates the arithmetic/harmonic mean bracket");
  }
  return out;
}

double corrector_residual(const PeriodicCoefficient& a, const Corrector& chi, int k) {
  if (k != 1 && k != 2) {
    throw InvalidInput("corrector index must be 1 or 2");
  }
  const CellSystem sys = build_cell_system(a);
  const Eigen::VectorXd& x = (k == 1) ? chi.chi1 : chi.chi2;
  const Eigen::VectorXd& b = (k == 1) ? sys.b1 : sys.b2;
  Eigen::VectorXd r = sys.A * x - b;
  const double bnorm = b.norm();
  return bnorm > 0.0 ? r.norm() / bnorm : r.norm();
}

}  // namespace phihom
