#include "phihom/besov.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

#include "phihom/errors.hpp"
#include "phihom/util.hpp"

namespace phihom {

double mother_bump(double z1, double z2) {
  const double r2 = z1 * z1 + z2 * z2;
  if (r2 >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - r2));
}

TestFamily TestFamily::dyadic(const DomainGrid& grid) {
  TestFamily family;
  family.grid = grid;
  for (double lambda = 0.5; lambda >= 4.0 * grid.h - 1e-12; lambda *= 0.5) {
    // Admissible centres: nodes with coord in [lambda, 1 - lambda], strided
    // by about lambda/2.
    const int stride = std::max(1, static_cast<int>(std::lround(lambda / (2.0 * grid.h))));
    std::vector<int> axis;
    const int first = std::max(0, static_cast<int>(std::ceil(lambda / grid.h - 1.0 - 1e-12)));
    for (int i = first; i < grid.n && grid.coord(i) <= 1.0 - lambda + 1e-12; i += stride) {
      axis.push_back(i);
    }
    if (axis.empty()) continue;
    std::vector<Centre> cs;
    cs.reserve(axis.size() * axis.size());
    for (int j : axis) {
      for (int i : axis) cs.push_back(Centre{i, j});
    }
    family.scales.push_back(lambda);
    family.centres.push_back(std::move(cs));
  }
  return family;
}

bool TestFamily::empty() const {
  for (const auto& cs : centres) {
    if (!cs.empty()) return false;
  }
  return true;
}

double pair_with_test(const ScalarField& f, double x1, double x2, double lambda) {
  const DomainGrid& grid = f.grid;
  if (!(lambda > 0.0)) throw InvalidInput("test scale must be positive");
  if (x1 - lambda < -1e-12 || x1 + lambda > 1.0 + 1e-12 || x2 - lambda < -1e-12 ||
      x2 + lambda > 1.0 + 1e-12) {
    throw InvalidInput("support violation: the test function sticks out of the domain");
  }
  const double h = grid.h;
  const int ilo = std::max(0, static_cast<int>(std::ceil((x1 - lambda) / h - 1.0)));
  const int ihi = std::min(grid.n - 1, static_cast<int>(std::floor((x1 + lambda) / h - 1.0)));
  const int jlo = std::max(0, static_cast<int>(std::ceil((x2 - lambda) / h - 1.0)));
  const int jhi = std::min(grid.n - 1, static_cast<int>(std::floor((x2 + lambda) / h - 1.0)));
  double acc = 0.0;
  for (int j = jlo; j <= jhi; ++j) {
    const double z2 = (grid.coord(j) - x2) / lambda;
    for (int i = ilo; i <= ihi; ++i) {
      const double z1 = (grid.coord(i) - x1) / lambda;
      acc += f.at(i, j) * mother_bump(z1, z2);
    }
  }
  return acc * h * h / (lambda * lambda);
}

BesovEstimate neg_holder_norm(const ScalarField& f, double alpha, const TestFamily& family) {
  if (!(alpha < 0.0)) throw InvalidInput("negative-Holder estimate needs alpha < 0");
  if (!(f.grid == family.grid)) throw InvalidInput("field and family live on different grids");
  if (family.empty()) throw InvalidInput("empty test family");
  BesovEstimate best;
  best.alpha = alpha;
  for (std::size_t s = 0; s < family.scales.size(); ++s) {
    const double lambda = family.scales[s];
    const double weight = std::pow(lambda, -alpha);
    for (const TestFamily::Centre& c : family.centres[s]) {
      const double x1 = f.grid.coord(c.i);
      const double x2 = f.grid.coord(c.j);
      const double v = weight * std::abs(pair_with_test(f, x1, x2, lambda));
      if (v > best.value) {
        best.value = v;
        best.argmax_x1 = x1;
        best.argmax_x2 = x2;
        best.argmax_lambda = lambda;
      }
    }
  }
  return best;
}

namespace {

// |d|^q with fast paths for the integer exponents the experiments use.
inline double abs_pow(double d, double q, int qi) {
  if (qi > 0) {
    double a = std::abs(d);
    double r = 1.0;
    double base = a;
    int e = qi;
    while (e > 0) {
      if (e & 1) r *= base;
      base *= base;
      e >>= 1;
    }
    return r;
  }
  return std::pow(std::abs(d), q);
}

int integer_exponent(double q) {
  const int qi = static_cast<int>(std::lround(q));
  return (qi >= 1 && std::abs(q - qi) < 1e-12) ? qi : 0;
}

// L^1 norms of the forward-difference gradient (edges against the Dirichlet
// boundary included).
double gradient_l1(const ScalarField& f) {
  const DomainGrid& g = f.grid;
  double acc = 0.0;
  for (int j = 0; j < g.n; ++j) {
    for (int e = 0; e <= g.n; ++e) {
      const double left = e > 0 ? f.at(e - 1, j) : 0.0;
      const double right = e < g.n ? f.at(e, j) : 0.0;
      acc += std::abs(right - left);
    }
  }
  for (int i = 0; i < g.n; ++i) {
    for (int e = 0; e <= g.n; ++e) {
      const double lower = e > 0 ? f.at(i, e - 1) : 0.0;
      const double upper = e < g.n ? f.at(i, e) : 0.0;
      acc += std::abs(upper - lower);
    }
  }
  return acc * g.h;  // sum |diff|/h * h^2
}

double gradient_lq_pow(const ScalarField& f, double q, int qi) {
  const DomainGrid& g = f.grid;
  const double h2 = g.h * g.h;
  double acc = 0.0;
  for (int j = 0; j < g.n; ++j) {
    for (int i = 0; i < g.n; ++i) {
      const double east = i + 1 < g.n ? f.at(i + 1, j) : 0.0;
      const double north = j + 1 < g.n ? f.at(i, j + 1) : 0.0;
      const double gx = (east - f.at(i, j)) / g.h;
      const double gy = (north - f.at(i, j)) / g.h;
      acc += (abs_pow(gx, q, qi) + abs_pow(gy, q, qi)) * h2;
    }
  }
  return acc;
}

}  // namespace

GagliardoKernel::GagliardoKernel(const DomainGrid& grid, double s, double q)
    : grid_(grid), s_(s), q_(q) {
  if (!(s > 0.0 && s < 1.0)) throw InvalidInput("Gagliardo order must lie in (0, 1)");
  if (!(q >= 1.0)) throw InvalidInput("Gagliardo integrability must satisfy q >= 1");
  const int size = grid.size();
  const double h4 = grid.h * grid.h * grid.h * grid.h;
  const double expo = 2.0 + s * q;
  kernel_.resize(size, size);
  for (int b = 0; b < size; ++b) {
    const double y1 = grid.coord(b % grid.n);
    const double y2 = grid.coord(b / grid.n);
    for (int a = 0; a < size; ++a) {
      if (a == b) {
        kernel_(a, b) = 0.0;
        continue;
      }
      const double d1 = grid.coord(a % grid.n) - y1;
      const double d2 = grid.coord(a / grid.n) - y2;
      kernel_(a, b) = h4 / std::pow(std::sqrt(d1 * d1 + d2 * d2), expo);
    }
  }
}

double GagliardoKernel::seminorm_pow(const Eigen::VectorXd& values) const {
  const int size = grid_.size();
  if (values.size() != size) throw InvalidInput("field size does not match kernel grid");
  const int qi = integer_exponent(q_);
  std::vector<double> per_column(static_cast<std::size_t>(size));
  for (int b = 0; b < size; ++b) {
    const double* col = kernel_.data() + static_cast<std::ptrdiff_t>(b) * size;
    const double fb = values[b];
    double acc = 0.0;
    for (int a = 0; a < size; ++a) {
      acc += abs_pow(values[a] - fb, q_, qi) * col[a];
    }
    per_column[static_cast<std::size_t>(b)] = acc;
  }
  return pairwise_sum(per_column);
}

double GagliardoKernel::seminorm_pow(const ScalarField& f) const { return seminorm_pow(f.values); }

double fractional_sobolev_norm(const ScalarField& f, const GagliardoKernel& kernel) {
  if (!(f.grid == kernel.grid())) throw InvalidInput("field and kernel live on different grids");
  const double q = kernel.q();
  const double lq = lp_norm(f, q);
  return std::pow(std::pow(lq, q) + kernel.seminorm_pow(f), 1.0 / q);
}

InequalityReport verify_B11_interpolation(const std::vector<ScalarField>& fields, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("interpolation order must lie in (0, 1)");
  if (fields.empty()) throw InvalidInput("empty sample set");
  InequalityReport report;
  report.name = "B11-interpolation";
  report.alpha = alpha;
  report.q = 1.0;
  report.samples = static_cast<int>(fields.size());
  report.min_ratio = std::numeric_limits<double>::infinity();

  for (const ScalarField& f : fields) {
    const DomainGrid& g = f.grid;
    const double l1 = lp_norm(f, 1.0);
    // Besov proxy: sum over dyadic scales of lambda^{-alpha}-weighted mean
    // L^1 differences over the four axis shifts of about lambda.
    double besov = l1;
    for (double lambda = 0.5; ; lambda *= 0.5) {
      const int shift = static_cast<int>(std::lround(lambda / g.h));
      if (shift < 1) break;
      double diff = 0.0;
      for (int j = 0; j < g.n; ++j) {
        for (int i = 0; i < g.n; ++i) {
          const double v = f.at(i, j);
          const double east = i + shift < g.n ? f.at(i + shift, j) : 0.0;
          const double west = i - shift >= 0 ? f.at(i - shift, j) : 0.0;
          const double north = j + shift < g.n ? f.at(i, j + shift) : 0.0;
          const double south = j - shift >= 0 ? f.at(i, j - shift) : 0.0;
          diff += std::abs(east - v) + std::abs(west - v) + std::abs(north - v) +
                  std::abs(south - v);
        }
      }
      diff *= 0.25 * g.h * g.h;
      besov += std::pow(lambda, -alpha) * diff;
    }
    const double grad = gradient_l1(f);
    const double rhs = std::pow(grad, alpha) * std::pow(l1, 1.0 - alpha) + l1;
    const double ratio = rhs > 0.0 ? besov / rhs : 0.0;
    if (!std::isfinite(ratio)) report.all_finite = false;
    report.ratios.push_back(ratio);
    report.max_ratio = std::max(report.max_ratio, ratio);
    report.min_ratio = std::min(report.min_ratio, ratio);
  }
  return report;
}

InequalityReport verify_fractional_GN(const std::vector<ScalarField>& fields, double alpha,
                                      double q) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("interpolation order must lie in (0, 1)");
  if (!(q >= 1.0)) throw InvalidInput("integrability must satisfy q >= 1");
  if (fields.empty()) throw InvalidInput("empty sample set");
  const DomainGrid& grid = fields.front().grid;
  const GagliardoKernel kernel(grid, alpha, q);
  const int qi = integer_exponent(q);

  InequalityReport report;
  report.name = "fractional-GN";
  report.alpha = alpha;
  report.q = q;
  report.samples = static_cast<int>(fields.size());
  report.min_ratio = std::numeric_limits<double>::infinity();

  for (const ScalarField& f : fields) {
    if (!(f.grid == grid)) throw InvalidInput("sample fields live on different grids");
    const double lhs = fractional_sobolev_norm(f, kernel);
    const double lq = lp_norm(f, q);
    const double w1q = std::pow(std::pow(lq, q) + gradient_lq_pow(f, q, qi), 1.0 / q);
    const double rhs = std::pow(w1q, alpha) * std::pow(lq, 1.0 - alpha);
    const double ratio = rhs > 0.0 ? lhs / rhs : 0.0;
    if (!std::isfinite(ratio)) report.all_finite = false;
    report.ratios.push_back(ratio);
    report.max_ratio = std::max(report.max_ratio, ratio);
    report.min_ratio = std::min(report.min_ratio, ratio);
  }
  return report;
}

void export_besov_csv(const std::vector<BesovEstimate>& estimates, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open CSV for writing: " + path);
  out << "alpha,value,argmax_x,argmax_y,argmax_lambda\n";
  out.precision(17);
  for (const BesovEstimate& e : estimates) {
    out << e.alpha << ',' << e.value << ',' << e.argmax_x1 << ',' << e.argmax_x2 << ','
        << e.argmax_lambda << '\n';
  }
  if (!out) throw NumericalError("CSV write failed: " + path);
}

}  // namespace phihom
