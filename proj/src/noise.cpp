#include "phihom/noise.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include "binio.hpp"
#include "phihom/errors.hpp"
#include "phihom/util.hpp"

namespace phihom {

namespace {

std::uint64_t chain(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                    std::uint64_t node, std::uint64_t salt) {
  std::uint64_t k = mix64(seed ^ 0x9E3779B97F4A7C15ULL);
  k = mix64(k ^ stream);
  k = mix64(k ^ step);
  k = mix64(k ^ node);
  return mix64(k ^ salt);
}

}  // namespace

double counter_gaussian(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                        std::uint64_t node) {
  const double u1 = uniform01(chain(seed, stream, step, node, 1));
  const double u2 = uniform01(chain(seed, stream, step, node, 2));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

NoiseRealisation::NoiseRealisation(DomainGrid grid, double dt, double t_start, double t_end,
                                   std::uint64_t seed, std::uint64_t stream_id,
                                   std::int64_t step_offset)
    : grid_(grid), dt_(dt), t_start_(t_start), seed_(seed), stream_(stream_id),
      offset_(step_offset) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidInput("invalid step: dt must be positive");
  if (grid.n < 1 || grid.h <= 0.0) throw InvalidInput("invalid grid");
  const double span = t_end - t_start;
  const long steps = std::lround(span / dt);
  if (steps < 1 || std::abs(steps * dt - span) > 1e-9 * std::max(1.0, std::abs(span))) {
    throw InvalidInput("horizon is not a positive whole number of steps");
  }
  steps_ = static_cast<int>(steps);
}

Eigen::VectorXd NoiseRealisation::increment(int step) const {
  if (step < 0 || step >= steps_) throw InvalidInput("noise step out of range");
  const double scale = 1.0 / (std::sqrt(dt_) * grid_.h);
  const auto counter_step = static_cast<std::uint64_t>(offset_ + step);
  Eigen::VectorXd out(grid_.size());
  for (int node = 0; node < grid_.size(); ++node) {
    out[node] =
        scale * counter_gaussian(seed_, stream_, counter_step, static_cast<std::uint64_t>(node));
  }
  return out;
}

Eigen::MatrixXd NoiseRealisation::materialise() const {
  Eigen::MatrixXd out(grid_.size(), steps_);
  for (int j = 0; j < steps_; ++j) out.col(j) = increment(j);
  return out;
}

const char* to_string(MollifyMethod m) {
  return m == MollifyMethod::kHeatKernel ? "heat-kernel" : "time-profile";
}

namespace {

// Normalised discrete weights of the time profile rho^(delta)(s) =
// delta^{-2} rho(s/delta^2) sampled at s = k dt, k = -margin..margin.
std::vector<double> profile_weights(double delta, double dt, int margin) {
  std::vector<double> w(static_cast<std::size_t>(2 * margin + 1), 0.0);
  const double d2 = delta * delta;
  double total = 0.0;
  for (int k = -margin; k <= margin; ++k) {
    const double v = mollifier_bump(k * dt / d2);
    w[static_cast<std::size_t>(k + margin)] = v;
    total += v;
  }
  for (double& v : w) v /= total;
  return w;
}

MollifiedNoise mollify_impl(const NoiseRealisation& xi, double delta, const OperatorHandle* L,
                            MollifyMethod method) {
  if (!(delta > 0.0 && delta < 0.5)) throw InvalidInput("mollification scale must lie in (0, 1/2)");
  if (L != nullptr && !(L->grid() == xi.grid())) {
    throw InvalidInput("semigroup operator lives on a different grid");
  }
  const double dt = xi.dt();
  const double d2 = delta * delta;
  const int margin = std::max(0, static_cast<int>(std::ceil(d2 / dt)) - 1);
  const int retained = xi.steps() - 2 * margin;
  if (retained < 1) {
    std::ostringstream msg;
    msg << "insufficient margin: delta = " << delta << " consumes " << margin
        << " steps at each end, but the horizon has only " << xi.steps()
        << " steps; pad it by at least " << (2 * margin + 1 - xi.steps()) << " more";
    throw InvalidInput(msg.str());
  }
  const std::vector<double> w = profile_weights(delta, dt, margin);

  MollifiedNoise out;
  out.delta = delta;
  out.method = method;
  out.eps = L != nullptr ? L->epsilon() : 0.0;
  out.grid = xi.grid();
  out.dt = dt;
  out.t_start = xi.t_start() + margin * dt;
  out.margin_steps = margin;
  out.values = Eigen::MatrixXd::Zero(xi.grid().size(), retained);

  // Apply each semigroup factor to every base increment it touches; the
  // handle caches its eigendecomposition, so repeated applies are two dense
  // matvecs each.
  for (int k = -margin; k <= margin; ++k) {
    const double weight = w[static_cast<std::size_t>(k + margin)];
    if (weight == 0.0) continue;
    for (int o = 0; o < retained; ++o) {
      const Eigen::VectorXd base = xi.increment(o + margin - k);
      if (L != nullptr) {
        out.values.col(o) += weight * L->apply_semigroup(k * dt + d2, base);
      } else {
        out.values.col(o) += weight * base;
      }
    }
  }
  return out;
}

}  // namespace

MollifiedNoise mollify_heat_kernel(const NoiseRealisation& xi, double delta,
                                   const OperatorHandle& L) {
  return mollify_impl(xi, delta, &L, MollifyMethod::kHeatKernel);
}

MollifiedNoise mollify_time_profile(const NoiseRealisation& xi, double delta) {
  return mollify_impl(xi, delta, nullptr, MollifyMethod::kTimeProfile);
}

IsometryReport verify_isometry(const NoiseRealisation& base, const Eigen::MatrixXd& f,
                               const Eigen::MatrixXd& g, int n_draws) {
  const int size = base.grid().size();
  if (f.rows() != size || g.rows() != size || f.cols() != base.steps() ||
      g.cols() != base.steps()) {
    throw InvalidInput("test functions must be grid.size() x steps arrays");
  }
  if (n_draws < 1) throw InvalidInput("need at least one draw");

  const double h2 = base.grid().h * base.grid().h;
  const double cell = h2 * base.dt();  // space-time volume element

  std::vector<double> products;
  products.reserve(static_cast<std::size_t>(n_draws));
  for (int r = 0; r < n_draws; ++r) {
    const NoiseRealisation xi(base.grid(), base.dt(), base.t_start(), base.t_end(), base.seed(),
                              base.stream_id() + static_cast<std::uint64_t>(r),
                              base.step_offset());
    double pf = 0.0, pg = 0.0;
    for (int j = 0; j < xi.steps(); ++j) {
      const Eigen::VectorXd inc = xi.increment(j);
      pf += cell * inc.dot(f.col(j));
      pg += cell * inc.dot(g.col(j));
    }
    products.push_back(pf * pg);
  }

  IsometryReport report;
  report.draws = n_draws;
  report.empirical = pairwise_sum(products) / n_draws;
  // target <f, g> over space-time
  double target = 0.0;
  for (int j = 0; j < f.cols(); ++j) target += cell * f.col(j).dot(g.col(j));
  report.target = target;
  if (n_draws == 1) {
    report.infinite_standard_error = true;
    report.standard_error = std::numeric_limits<double>::infinity();
  } else {
    std::vector<double> sq(products.size());
    for (std::size_t i = 0; i < products.size(); ++i) {
      const double d = products[i] - report.empirical;
      sq[i] = d * d;
    }
    const double var = pairwise_sum(sq) / (n_draws - 1);
    report.standard_error = std::sqrt(var / n_draws);
  }
  return report;
}

using binio::get_u64;
using binio::put_u64;

void dump_noise(const NoiseRealisation& xi, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot open noise dump for writing: " + path);
  put_u64(out, static_cast<std::uint64_t>(xi.grid().n));
  put_u64(out, std::bit_cast<std::uint64_t>(xi.dt()));
  put_u64(out, static_cast<std::uint64_t>(xi.steps()));
  put_u64(out, xi.seed());
  put_u64(out, xi.stream_id());
  for (int j = 0; j < xi.steps(); ++j) {
    const Eigen::VectorXd inc = xi.increment(j);
    for (int node = 0; node < inc.size(); ++node) {
      put_u64(out, std::bit_cast<std::uint64_t>(inc[node]));
    }
  }
  if (!out) throw NumericalError("noise dump write failed: " + path);
}

NoiseRealisation load_noise(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open noise dump: " + path);
  const auto n = static_cast<int>(get_u64(in));
  const double dt = std::bit_cast<double>(get_u64(in));
  const auto steps = static_cast<int>(get_u64(in));
  const std::uint64_t seed = get_u64(in);
  const std::uint64_t stream = get_u64(in);
  const NoiseRealisation xi(DomainGrid::make(n), dt, 0.0, steps * dt, seed, stream);
  for (int j = 0; j < steps; ++j) {
    const Eigen::VectorXd expect = xi.increment(j);
    for (int node = 0; node < expect.size(); ++node) {
      const double got = std::bit_cast<double>(get_u64(in));
      if (std::bit_cast<std::uint64_t>(got) != std::bit_cast<std::uint64_t>(expect[node])) {
        throw NumericalError("noise dump payload does not match its header (corrupt data)");
      }
    }
  }
  return xi;
}

}  // namespace phihom
