#include "phihom/util.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace phihom {

namespace {

double pairwise_sum_impl(const double* xs, std::size_t n) {
  if (n <= 32) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += xs[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum_impl(xs, half) + pairwise_sum_impl(xs + half, n - half);
}

}  // namespace

double pairwise_sum(std::span<const double> xs) {
  return pairwise_sum_impl(xs.data(), xs.size());
}

double pairwise_sum(const Eigen::VectorXd& xs) {
  return pairwise_sum_impl(xs.data(), static_cast<std::size_t>(xs.size()));
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

struct GaussLegendre64 {
  std::array<double, 64> nodes{};
  std::array<double, 64> weights{};

  GaussLegendre64() {
    // Roots of P_64 by Newton iteration with the Chebyshev-angle initial
    // guess; symmetric pairs filled together.
    constexpr int n = 64;
    for (int i = 0; i < n / 2; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int iter = 0; iter < 100; ++iter) {
        // Legendre recurrence: p2 = P_n(x), dp = P_n'(x).
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-15) break;
      }
      const double w = 2.0 / ((1.0 - x * x) * dp * dp);
      nodes[static_cast<std::size_t>(i)] = -x;
      nodes[static_cast<std::size_t>(n - 1 - i)] = x;
      weights[static_cast<std::size_t>(i)] = w;
      weights[static_cast<std::size_t>(n - 1 - i)] = w;
    }
  }
};

const GaussLegendre64& gl64() {
  static const GaussLegendre64 rule;
  return rule;
}

double raw_bump(double s) {
  if (std::abs(s) >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - s * s));
}

}  // namespace

double gauss_legendre_64(const std::function<double(double)>& f, double a, double b) {
  const GaussLegendre64& rule = gl64();
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double acc = 0.0;
  for (int i = 0; i < 64; ++i) {
    acc += rule.weights[static_cast<std::size_t>(i)] * f(mid + half * rule.nodes[static_cast<std::size_t>(i)]);
  }
  return acc * half;
}

double mollifier_bump(double s) {
  static const double norm = gauss_legendre_64(raw_bump, -1.0, 1.0);
  return raw_bump(s) / norm;
}

double student_t_975(int dof) {
  // Standard table; dof beyond 30 is indistinguishable from normal at the
  // precision rate fits care about.
  static constexpr std::array<double, 30> table = {
      12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
      2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
      2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
  if (dof < 1) return table[0];
  if (dof <= 30) return table[static_cast<std::size_t>(dof - 1)];
  return 1.960;
}

}  // namespace phihom
