#include "phihom/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "phihom/errors.hpp"
#include "phihom/operators.hpp"

namespace phihom {

namespace {

// section.key in the file -> canonical ExperimentConfig key.
const std::map<std::string, std::string>& key_map() {
  static const std::map<std::string, std::string> map = {
      {"coefficient.preset", "preset"},
      {"coefficient.axis", "laminate_axis"},
      {"coefficient.low", "laminate_low"},
      {"coefficient.high", "laminate_high"},
      {"coefficient.a11", "constant_a11"},
      {"coefficient.a12", "constant_a12"},
      {"coefficient.a22", "constant_a22"},
      {"coefficient.contrast", "checker_contrast"},
      {"coefficient.csv", "coefficient_csv"},
      {"coefficient.resolution", "cell_resolution"},
      {"grid.n", "grid_n"},
      {"ladder.eps", "eps_ladder"},
      {"ladder.delta", "delta_ladder"},
      {"statistics.m", "m_orders"},
      {"statistics.realisations", "realisations"},
      {"statistics.seed", "seed"},
      {"dynamics.degree", "n_deg"},
      {"dynamics.t_end", "t_end"},
      {"dynamics.dt", "dt"},
      {"dynamics.burn_in", "burn_in"},
      {"dynamics.kappa", "kappa"},
      {"dynamics.beta", "beta"},
      {"dynamics.stride", "statistic_stride"},
      {"dynamics.p", "sobolev_p"},
      {"semigroup.t", "t_semigroup"},
      {"output.dir", "out_dir"},
      {"output.threads", "threads"},
  };
  return map;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string strip_comment(const std::string& line) {
  const std::size_t pos = line.find_first_of("#;");
  return pos == std::string::npos ? line : line.substr(0, pos);
}

std::string valid_keys_for(const std::string& section) {
  std::string out;
  const std::string prefix = section + ".";
  for (const auto& [file_key, canonical] : key_map()) {
    if (file_key.rfind(prefix, 0) == 0) {
      if (!out.empty()) out += ", ";
      out += file_key.substr(prefix.size());
    }
  }
  return out;
}

std::string valid_sections() {
  std::set<std::string> sections;
  for (const auto& [file_key, canonical] : key_map()) {
    sections.insert(file_key.substr(0, file_key.find('.')));
  }
  std::string out;
  for (const std::string& s : sections) {
    if (!out.empty()) out += ", ";
    out += s;
  }
  return out;
}

}  // namespace

ParsedConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file: " + path);

  ParsedConfig parsed;
  std::set<std::string> seen;
  std::string section;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string text = trim(strip_comment(line));
    if (text.empty()) continue;

    if (text.front() == '[') {
      if (text.back() != ']') {
        throw InvalidInput("config line " + std::to_string(lineno) +
                           ": unterminated section header '" + text + "'");
      }
      section = trim(text.substr(1, text.size() - 2));
      if (valid_keys_for(section).empty()) {
        throw InvalidInput("config line " + std::to_string(lineno) + ": unknown section [" +
                           section + "]; valid sections: " + valid_sections());
      }
      continue;
    }

    const std::size_t eq = text.find('=');
    if (eq == std::string::npos) {
      throw InvalidInput("config line " + std::to_string(lineno) +
                         ": expected 'key = value', got '" + text + "'");
    }
    if (section.empty()) {
      throw InvalidInput("config line " + std::to_string(lineno) +
                         ": key outside any section; valid sections: " + valid_sections());
    }
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    const std::string file_key = section + "." + key;

    const auto it = key_map().find(file_key);
    if (it == key_map().end()) {
      throw InvalidInput("config line " + std::to_string(lineno) + ": unknown key '" + key +
                         "' in [" + section + "]; valid keys: " + valid_keys_for(section));
    }
    if (!seen.insert(file_key).second) {
      throw InvalidInput("config line " + std::to_string(lineno) + ": duplicate key '" + key +
                         "' in [" + section + "]");
    }
    try {
      apply_config_entry(parsed.config, it->second, value);
    } catch (const InvalidInput& e) {
      throw InvalidInput("config line " + std::to_string(lineno) + ": " + e.what());
    }
    parsed.overrides.push_back(it->second);
  }

  std::sort(parsed.overrides.begin(), parsed.overrides.end());
  for (const auto& [canonical, value] : config_entries(parsed.config)) {
    if (!std::binary_search(parsed.overrides.begin(), parsed.overrides.end(), canonical)) {
      parsed.defaults_applied.push_back(canonical);
    }
  }
  validate_config(parsed.config);
  return parsed;
}

void validate_config(const ExperimentConfig& config) {
  if (config.grid_n < 2) throw InvalidInput("grid n must be at least 2");
  const DomainGrid grid = DomainGrid::make(config.grid_n);

  if (config.eps_ladder.empty()) throw InvalidInput("the eps ladder must not be empty");
  for (double eps : config.eps_ladder) check_commensurate(grid, eps);

  for (double delta : config.delta_ladder) {
    if (!(delta > 0.0 && delta < 0.5)) {
      throw InvalidInput("mollification scales must lie in (0, 1/2), got delta = " +
                         std::to_string(delta));
    }
  }

  for (int m : config.m_orders) {
    if (m < 1 || m > 5) throw InvalidInput("Wick experiment orders must lie in 1..5");
  }
  if (config.realisations < 1) throw InvalidInput("need at least one realisation");
  if (config.n_deg < 1 || config.n_deg > 3) {
    throw InvalidInput("unsupported nonlinearity: the half-degree must be 1, 2, or 3");
  }
  if (!(config.dt > 0.0)) throw InvalidInput("dt must be positive");
  if (!(config.t_end > 0.0)) throw InvalidInput("t_end must be positive");
  if (!(config.burn_in > 0.0)) throw InvalidInput("burn_in must be positive");
  if (!(config.kappa > 0.0 && config.kappa < 1.0)) throw InvalidInput("kappa must lie in (0, 1)");
  if (!(config.beta > 0.0)) throw InvalidInput("beta must be positive");
  if (!(config.sobolev_p >= 1.0)) throw InvalidInput("sobolev_p must satisfy p >= 1");
  if (config.statistic_stride < 1) throw InvalidInput("statistic_stride must be at least 1");
  if (!(config.t_semigroup > 0.0)) throw InvalidInput("the semigroup time must be positive");
  if (config.threads < 0) throw InvalidInput("threads must be nonnegative");
  if (config.cell_resolution < 8) throw InvalidInput("cell resolution must be at least 8");
}

}  // namespace phihom
