#pragma once

#include <string>
#include <vector>

#include "phihom/bench.hpp"

namespace phihom {

// A config file parse: the resulting experiment settings plus which
// canonical keys the file set and which stayed at their defaults.
struct ParsedConfig {
  ExperimentConfig config;
  std::vector<std::string> overrides;         // canonical keys set by the file
  std::vector<std::string> defaults_applied;  // canonical keys left alone
};

// INI-style experiment file: [section] headers, key = value lines, # or ;
// comments.  Numeric values accept fractions ("1/4") and lists are
// space-separated.  Unknown sections or keys and duplicate keys are
// errors; the error message lists what would have been valid.
//
//   [coefficient]  preset axis low high a11 a12 a22 contrast csv resolution
//   [grid]         n
//   [ladder]       eps delta
//   [statistics]   m realisations seed
//   [dynamics]     degree t_end dt burn_in kappa beta stride p
//   [semigroup]    t
//   [output]       dir threads
ParsedConfig parse_config(const std::string& path);

// Cross-field checks shared by every entry point: ladder rungs commensurate
// with the grid, deltas in (0, 1/2), positive steps and horizons.
void validate_config(const ExperimentConfig& config);

}  // namespace phihom
