#include "phihom/grid.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "phihom/util.hpp"

namespace phihom {

DomainGrid DomainGrid::make(int n) {
  if (n < 2) {
    throw InvalidInput("invalid resolution: grid needs n >= 2 interior nodes per axis, got n = " +
                       std::to_string(n));
  }
  DomainGrid g;
  g.n = n;
  g.h = 1.0 / (n + 1);
  return g;
}

ScalarField ScalarField::zero(const DomainGrid& g) {
  return {g, Eigen::VectorXd::Zero(g.size())};
}

ScalarField ScalarField::constant(const DomainGrid& g, double c) {
  return {g, Eigen::VectorXd::Constant(g.size(), c)};
}

ScalarField ScalarField::from_vector(const DomainGrid& g, Eigen::VectorXd v) {
  if (v.size() != g.size()) {
    throw InvalidInput("field/grid shape mismatch: expected " + std::to_string(g.size()) +
                       " values, got " + std::to_string(v.size()));
  }
  return {g, std::move(v)};
}

double lp_norm(const ScalarField& f, double p) {
  if (f.values.size() != f.grid.size()) {
    throw InvalidInput("field/grid shape mismatch in lp_norm");
  }
  if (std::isinf(p) && p > 0) {
    return f.values.cwiseAbs().maxCoeff();
  }
  if (!(p >= 1.0) || std::isnan(p)) {
    throw InvalidInput("invalid exponent: lp_norm needs p >= 1 (or inf), got p = " +
                       std::to_string(p));
  }
  const double w = f.grid.h * f.grid.h;
  Eigen::VectorXd terms(f.values.size());
  if (p == 2.0) {
    terms = f.values.array().square();
  } else if (p == 1.0) {
    terms = f.values.array().abs();
  } else {
    terms = f.values.array().abs().pow(p);
  }
  return std::pow(w * pairwise_sum(terms), 1.0 / p);
}

}  // namespace phihom
