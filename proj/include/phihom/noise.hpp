#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "phihom/grid.hpp"
#include "phihom/operators.hpp"

namespace phihom {

// Standard normal as a pure function of (seed, stream, step, node): a
// SplitMix64 chain feeding the Box-Muller cosine branch. No state, so the
// value never depends on access order or thread schedule.
double counter_gaussian(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                        std::uint64_t node);

// Space-time white noise on [t_start, t_end] x grid. Increment j is the
// i.i.d. N(0, 1/(dt h^2)) field for [t_start + j dt, t_start + (j+1) dt).
// Nothing is stored: values regenerate on demand from the counter stream, so
// equal (seed, stream_id) are bit-identical by construction. step_offset
// shifts the counter's step index (increment j draws from step j + offset),
// which realises exact time shifts of one underlying noise.
class NoiseRealisation {
 public:
  NoiseRealisation(DomainGrid grid, double dt, double t_start, double t_end,
                   std::uint64_t seed, std::uint64_t stream_id = 0,
                   std::int64_t step_offset = 0);

  const DomainGrid& grid() const { return grid_; }
  double dt() const { return dt_; }
  double t_start() const { return t_start_; }
  double t_end() const { return t_start_ + steps_ * dt_; }
  int steps() const { return steps_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }
  std::int64_t step_offset() const { return offset_; }

  // One scaled increment (length grid.size()).
  Eigen::VectorXd increment(int step) const;

  // All increments, one column per step.
  Eigen::MatrixXd materialise() const;

 private:
  DomainGrid grid_;
  double dt_ = 0.0;
  double t_start_ = 0.0;
  int steps_ = 0;
  std::uint64_t seed_ = 0, stream_ = 0;
  std::int64_t offset_ = 0;
};

enum class MollifyMethod { kHeatKernel, kTimeProfile };

const char* to_string(MollifyMethod m);

struct MollifiedNoise {
  double delta = 0.0;
  MollifyMethod method = MollifyMethod::kHeatKernel;
  double eps = 0.0;  // oscillation scale of the semigroup used (metadata)
  DomainGrid grid;
  double dt = 0.0;
  double t_start = 0.0;    // time of the first retained step
  int margin_steps = 0;    // steps consumed at each end of the base horizon
  Eigen::MatrixXd values;  // one column per retained step
};

// xi^(delta): time convolution against the even bump profile at scale
// delta^2, composed with e^{(t-s+delta^2) L}. delta in (0, 1/2). A margin of
// ceil(delta^2/dt)-1 steps is consumed at each end of the horizon; if no
// steps remain the call fails, stating the padding needed. When delta^2 <=
// dt the profile degenerates to a single step and the output is e^{delta^2 L}
// applied stepwise.
MollifiedNoise mollify_heat_kernel(const NoiseRealisation& xi, double delta,
                                   const OperatorHandle& L);

// Ablation variant: the time profile alone, no semigroup factor.
MollifiedNoise mollify_time_profile(const NoiseRealisation& xi, double delta);

struct IsometryReport {
  double empirical = 0.0;
  double standard_error = 0.0;
  double target = 0.0;
  int draws = 0;
  bool infinite_standard_error = false;  // single draw
};

// Monte Carlo check of E <xi,f><xi,g> = <f,g> in space-time L^2. f and g are
// space-time arrays (grid.size() rows, one column per step); draw r uses
// stream_id base.stream_id + r.
IsometryReport verify_isometry(const NoiseRealisation& base, const Eigen::MatrixXd& f,
                               const Eigen::MatrixXd& g, int n_draws);

// Binary replay format: header (n, dt bits, steps, seed, stream_id) as
// little-endian 64-bit fields, then the increments step-major as raw doubles.
void dump_noise(const NoiseRealisation& xi, const std::string& path);

// Rebuilds the realisation from the header (t_start = 0, offset 0) and
// verifies the payload matches regeneration bit for bit.
NoiseRealisation load_noise(const std::string& path);

}  // namespace phihom
