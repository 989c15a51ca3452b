// Univariate open B-spline bases: evaluation (values and derivatives up to
// order 2), dyadic refinement, and prolongation between nested knot vectors.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <vector>

#include "mp/error.hpp"

namespace mp {

constexpr double kKnotTol = 1e-12;  // knot equality tolerance

struct KnotVector {
  int degree = 0;
  std::vector<double> knots;  // open: first/last value repeated degree+1 times

  int num_basis() const { return static_cast<int>(knots.size()) - degree - 1; }
  double front() const { return knots.front(); }
  double back() const { return knots.back(); }

  // Distinct knot values (element breakpoints) including both endpoints.
  std::vector<double> breakpoints() const;
  int span_count() const { return static_cast<int>(breakpoints().size()) - 1; }

  // Index k with knots[k] <= x < knots[k+1]; x == back() lands in the last
  // nonempty span (closed right endpoint convention).
  int find_span(double x) const;

  // Greville abscissae (knot averages), one per basis function.
  std::vector<double> greville() const;

  void validate() const;  // throws on malformed data
};

bool operator==(const KnotVector& a, const KnotVector& b);

// Open knot vector on [0,1] with the given strictly increasing interior breaks
// (each of multiplicity one).
KnotVector make_open_knot_vector(int degree, const std::vector<double>& interior_breaks);

// Values of the degree+1 basis functions active at x, for derivative orders
// 0..nderiv (nderiv <= 2). out[d][j] is the d-th derivative of basis function
// first+j. Returns first (index of the first active function).
int eval_basis_all(const KnotVector& kv, double x, int nderiv,
                   std::array<std::array<double, 6>, 3>& out);

// Spec-facing single-order variant.
int eval_basis(const KnotVector& kv, double x, int deriv, std::vector<double>& values);

// Insert the midpoint of every nonempty knot span (multiplicity one).
KnotVector refine_dyadic(const KnotVector& kv);

// Coefficient prolongation c_fine = P * c_coarse such that the coarse spline is
// reproduced exactly on the fine knot vector. Requires same degree and fine's
// knot multiset to contain coarse's.
Eigen::SparseMatrix<double> prolongation_matrix(const KnotVector& coarse,
                                                const KnotVector& fine);

// Reversed knot vector (parameter t -> front+back-t); used for facet matching.
KnotVector reversed(const KnotVector& kv);

}  // namespace mp
