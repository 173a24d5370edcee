#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>

#include <Eigen/Dense>

namespace phihom {

// Pairwise (cascade) summation. Deterministic for a fixed input order and
// far more accurate than left-to-right accumulation on long Monte Carlo /
// quadrature reductions; every statistic that lands in a report goes
// through this.
double pairwise_sum(std::span<const double> xs);
double pairwise_sum(const Eigen::VectorXd& xs);

// FNV-1a 64-bit hash; used to fingerprint canonical config text in manifests.
std::uint64_t fnv1a64(std::string_view bytes);

// Two-sided 97.5% Student-t quantile for `dof` degrees of freedom (>= 1),
// saturating to the normal quantile for large dof.
double student_t_975(int dof);

// SplitMix64 finaliser: a bijective 64-bit mixer. All reproducible
// pseudo-randomness in the library is derived by chaining this over
// counters, so draws depend only on logical indices, never on call order.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Map 64 random bits to a double in (0, 1): 53-bit mantissa, offset by half
// an ulp so 0 is excluded (safe as a Box-Muller radius).
constexpr double uniform01(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// The standard even bump c exp(-1/(1-s^2)) on (-1, 1), normalised to
// integrate to 1; identically 0 outside.
double mollifier_bump(double s);

// 64-point Gauss-Legendre quadrature over [a, b] (nodes computed once by
// Newton iteration on the Legendre recurrence).
double gauss_legendre_64(const std::function<double(double)>& f, double a, double b);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace phihom
