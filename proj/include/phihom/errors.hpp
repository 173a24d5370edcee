#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace phihom {

// Precondition and configuration violations: bad resolutions, scales,
// exponents, incompatible shapes, malformed config files. The CLI maps
// these to exit code 2 (usage error).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical failures: solver non-convergence, indefinite matrices where SPD
// was required, integrator blow-up. The CLI maps these to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iterative solver failure carrying the (possibly thinned) residual history.
class SolverFailure : public NumericalError {
 public:
  SolverFailure(const std::string& what, std::vector<double> residuals)
      : NumericalError(what), residual_history(std::move(residuals)) {}

  std::vector<double> residual_history;
};

}  // namespace phihom
