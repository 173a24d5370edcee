#include "phihom/coefficient.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace phihom {

namespace {

// Eigenvalues of a symmetric 2x2 [[p, q], [q, r]].
std::pair<double, double> sym_eigs(double p, double q, double r) {
  const double mean = 0.5 * (p + r);
  const double rad = std::sqrt(0.25 * (p - r) * (p - r) + q * q);
  return {mean - rad, mean + rad};
}

}  // namespace

PeriodicCoefficient::PeriodicCoefficient(int resolution, Eigen::VectorXd a11,
                                         Eigen::VectorXd a12, Eigen::VectorXd a22,
                                         std::string preset)
    : m_(resolution),
      a11_(std::move(a11)),
      a12_(std::move(a12)),
      a22_(std::move(a22)),
      preset_(std::move(preset)) {
  if (m_ < 2) {
    throw InvalidInput("invalid resolution: cell grid needs M >= 2, got M = " +
                       std::to_string(m_));
  }
  const int size = m_ * m_;
  if (a11_.size() != size || a12_.size() != size || a22_.size() != size) {
    throw InvalidInput("coefficient table size mismatch: expected " + std::to_string(size) +
                       " nodes");
  }
  ell_lo_ = std::numeric_limits<double>::infinity();
  ell_hi_ = 0.0;
  diagonal_ = true;
  constant_ = true;
  for (int k = 0; k < size; ++k) {
    if (!std::isfinite(a11_[k]) || !std::isfinite(a12_[k]) || !std::isfinite(a22_[k])) {
      throw InvalidInput("assumption violation: coefficient entries must be finite");
    }
    auto [lo, hi] = sym_eigs(a11_[k], a12_[k], a22_[k]);
    if (!(lo > 0.0)) {
      throw NumericalError("assumption violation: coefficient matrix not positive definite at a cell node (lambda_min = " +
                           std::to_string(lo) + ")");
    }
    ell_lo_ = std::min(ell_lo_, lo);
    ell_hi_ = std::max(ell_hi_, hi);
    if (a12_[k] != 0.0) diagonal_ = false;
    if (a11_[k] != a11_[0] || a12_[k] != a12_[0] || a22_[k] != a22_[0]) constant_ = false;
  }
}

Eigen::Matrix2d PeriodicCoefficient::at(int i, int j) const {
  Eigen::Matrix2d a;
  const int k = index(i, j);
  a << a11_[k], a12_[k], a12_[k], a22_[k];
  return a;
}

Eigen::Matrix2d PeriodicCoefficient::evaluate(double y1, double y2) const {
  // Wrap into [0,1) and bilinearly interpolate the four surrounding nodes.
  auto wrap = [](double y) {
    double w = y - std::floor(y);
    return (w >= 1.0) ? 0.0 : w;  // guard w == 1.0 from round-off
  };
  const double u = wrap(y1) * m_;
  const double v = wrap(y2) * m_;
  const int i0 = static_cast<int>(u) % m_;
  const int j0 = static_cast<int>(v) % m_;
  const int i1 = (i0 + 1) % m_;
  const int j1 = (j0 + 1) % m_;
  const double fu = u - std::floor(u);
  const double fv = v - std::floor(v);
  const double w00 = (1 - fu) * (1 - fv), w10 = fu * (1 - fv);
  const double w01 = (1 - fu) * fv, w11 = fu * fv;
  auto blend = [&](const Eigen::VectorXd& c) {
    return w00 * c[index(i0, j0)] + w10 * c[index(i1, j0)] + w01 * c[index(i0, j1)] +
           w11 * c[index(i1, j1)];
  };
  Eigen::Matrix2d a;
  const double p = blend(a11_), q = blend(a12_), r = blend(a22_);
  a << p, q, q, r;
  return a;
}

double PeriodicCoefficient::mean_inverse_sqrt_det() const {
  double s = 0.0;
  for (int k = 0; k < m_ * m_; ++k) {
    const double det = a11_[k] * a22_[k] - a12_[k] * a12_[k];
    s += 1.0 / std::sqrt(det);
  }
  return s / (m_ * m_);
}

Eigen::Matrix2d PeriodicCoefficient::arithmetic_mean() const {
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  for (int k = 0; k < m_ * m_; ++k) {
    a(0, 0) += a11_[k];
    a(0, 1) += a12_[k];
    a(1, 1) += a22_[k];
  }
  a /= m_ * m_;
  a(1, 0) = a(0, 1);
  return a;
}

Eigen::Matrix2d PeriodicCoefficient::harmonic_mean() const {
  Eigen::Matrix2d inv = Eigen::Matrix2d::Zero();
  for (int k = 0; k < m_ * m_; ++k) {
    Eigen::Matrix2d a;
    a << a11_[k], a12_[k], a12_[k], a22_[k];
    inv += a.inverse();
  }
  inv /= m_ * m_;
  return inv.inverse();
}

PeriodicCoefficient make_constant(const Eigen::Matrix2d& a) {
  if (a(0, 1) != a(1, 0)) {
    throw InvalidInput("assumption violation: constant coefficient must be symmetric (a12 != a21)");
  }
  const int m = 2;
  const int size = m * m;
  return PeriodicCoefficient(m, Eigen::VectorXd::Constant(size, a(0, 0)),
                             Eigen::VectorXd::Constant(size, a(0, 1)),
                             Eigen::VectorXd::Constant(size, a(1, 1)), "constant");
}

PeriodicCoefficient make_laminate(int axis, double low, double high, int resolution) {
  if (axis != 1 && axis != 2) {
    throw InvalidInput("invalid axis: laminate axis must be 1 or 2, got " + std::to_string(axis));
  }
  if (!(low > 0.0) || !(high >= low)) {
    throw InvalidInput("assumption violation: laminate needs 0 < low <= high, got low = " +
                       std::to_string(low) + ", high = " + std::to_string(high));
  }
  if (resolution % 2 != 0) {
    throw InvalidInput("invalid resolution: laminate needs an even cell resolution so the "
                       "half-period interfaces land on cell nodes, got M = " +
                       std::to_string(resolution));
  }
  const int m = resolution;
  Eigen::VectorXd d(m * m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      const int along = (axis == 1) ? i : j;
      // alpha = low on [0, 1/2), high on [1/2, 1)
      d[j * m + i] = (along < m / 2) ? low : high;
    }
  }
  return PeriodicCoefficient(m, d, Eigen::VectorXd::Zero(m * m), d, "laminate");
}

PeriodicCoefficient make_smooth_checker(double contrast, int resolution) {
  if (!(contrast >= 1.0)) {
    throw InvalidInput("assumption violation: smooth-checker contrast must be >= 1, got " +
                       std::to_string(contrast));
  }
  const int m = resolution;
  if (m < 2) {
    throw InvalidInput("invalid resolution: cell grid needs M >= 2");
  }
  // alpha(y) = mu (1 + r sin(2 pi y1) sin(2 pi y2)) with range exactly [1, contrast].
  const double mu = 0.5 * (contrast + 1.0);
  const double r = (contrast - 1.0) / (contrast + 1.0);
  Eigen::VectorXd d(m * m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      const double y1 = static_cast<double>(i) / m;
      const double y2 = static_cast<double>(j) / m;
      d[j * m + i] =
          mu * (1.0 + r * std::sin(2 * std::numbers::pi * y1) * std::sin(2 * std::numbers::pi * y2));
    }
  }
  return PeriodicCoefficient(m, d, Eigen::VectorXd::Zero(m * m), d, "smooth-checker");
}

PeriodicCoefficient make_user_table(int resolution, const std::vector<Eigen::Matrix2d>& values) {
  const int m = resolution;
  if (static_cast<int>(values.size()) != m * m) {
    throw InvalidInput("coefficient table size mismatch: expected " + std::to_string(m * m) +
                       " matrices, got " + std::to_string(values.size()));
  }
  Eigen::VectorXd p(m * m), q(m * m), r(m * m);
  for (int k = 0; k < m * m; ++k) {
    const Eigen::Matrix2d& a = values[static_cast<std::size_t>(k)];
    if (a(0, 1) != a(1, 0)) {
      throw InvalidInput("assumption violation: user table entry " + std::to_string(k) +
                         " is not symmetric (a12 != a21)");
    }
    p[k] = a(0, 0);
    q[k] = a(0, 1);
    r[k] = a(1, 1);
  }
  return PeriodicCoefficient(m, std::move(p), std::move(q), std::move(r), "user-table");
}

PeriodicCoefficient load_coefficient_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidInput("cannot open coefficient table: " + path);
  }
  std::vector<double> p, q, r;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string tok;
    double v[3];
    for (int c = 0; c < 3; ++c) {
      if (!std::getline(row, tok, ',')) {
        throw InvalidInput("coefficient CSV row needs 3 columns (a11,a12,a22): " + line);
      }
      v[c] = std::stod(tok);
    }
    p.push_back(v[0]);
    q.push_back(v[1]);
    r.push_back(v[2]);
  }
  const int size = static_cast<int>(p.size());
  const int m = static_cast<int>(std::lround(std::sqrt(static_cast<double>(size))));
  if (m * m != size) {
    throw InvalidInput("coefficient CSV must hold a square M x M table, got " +
                       std::to_string(size) + " rows");
  }
  Eigen::VectorXd pv = Eigen::Map<Eigen::VectorXd>(p.data(), size);
  Eigen::VectorXd qv = Eigen::Map<Eigen::VectorXd>(q.data(), size);
  Eigen::VectorXd rv = Eigen::Map<Eigen::VectorXd>(r.data(), size);
  return PeriodicCoefficient(m, std::move(pv), std::move(qv), std::move(rv), "user-table");
}

Eigen::Matrix2d evaluate_scaled(const PeriodicCoefficient& a, double eps, double x1, double x2) {
  if (!(eps > 0.0)) {
    throw InvalidInput("invalid scale: evaluate_scaled needs eps > 0, got eps = " +
                       std::to_string(eps));
  }
  return a.evaluate(x1 / eps, x2 / eps);
}

}  // namespace phihom
