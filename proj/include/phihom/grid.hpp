#pragma once

#include <Eigen/Dense>

#include "phihom/errors.hpp"

namespace phihom {

// Uniform grid on the open unit square with homogeneous Dirichlet boundary:
// n interior nodes per axis at coordinates (i+1)h, i = 0..n-1, h = 1/(n+1).
// Boundary nodes carry the value 0 and are never stored.
struct DomainGrid {
  int n = 0;
  double h = 0.0;

  static DomainGrid make(int n);

  int size() const { return n * n; }
  // x runs fastest: node (i, j) lives at flat index j*n + i.
  int index(int i, int j) const { return j * n + i; }
  double coord(int i) const { return (i + 1) * h; }

  friend bool operator==(const DomainGrid&, const DomainGrid&) = default;
};

// Scalar field sampled on the interior nodes of a DomainGrid.
struct ScalarField {
  DomainGrid grid;
  Eigen::VectorXd values;  // length n*n, layout DomainGrid::index

  static ScalarField zero(const DomainGrid& g);
  static ScalarField constant(const DomainGrid& g, double c);
  static ScalarField from_vector(const DomainGrid& g, Eigen::VectorXd v);

  double& at(int i, int j) { return values[grid.index(i, j)]; }
  double at(int i, int j) const { return values[grid.index(i, j)]; }
};

// Discrete L^p norm with h^2 quadrature weights, p in [1, inf]; p = inf is
// the max norm. p < 1 is rejected.
double lp_norm(const ScalarField& f, double p);

// A field sampled along a time grid: frame j (column j) is the field at
// t0 + j*dt. frames has grid.size() rows and steps+1 columns.
struct FieldPath {
  DomainGrid grid;
  double t0 = 0.0;
  double dt = 0.0;
  Eigen::MatrixXd frames;

  int steps() const { return static_cast<int>(frames.cols()) - 1; }
  double time(int j) const { return t0 + j * dt; }
  ScalarField frame(int j) const {
    return ScalarField::from_vector(grid, frames.col(j));
  }
};

}  // namespace phihom
