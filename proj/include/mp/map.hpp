// Geometry maps: coefficient vectors over a multipatch space with value,
// Jacobian and Hessian evaluation (patch-local and in parametric coordinates).
#pragma once

#include <memory>

#include "mp/topology.hpp"

namespace mp {

using SpacePtr = std::shared_ptr<const MultipatchSpace>;

// Value and mu-derivatives of a 2-component spline field at one patch point.
struct MapJet {
  Vector2d x = Vector2d::Zero();
  Matrix2d Jmu = Matrix2d::Zero();                 // Jmu(i,j) = d x_i / d mu_j
  std::array<Matrix2d, 2> Hmu{Matrix2d::Zero(), Matrix2d::Zero()};  // per component
};

struct GeometryMap {
  SpacePtr space;
  Eigen::MatrixX2d coeffs;  // dim x 2

  GeometryMap() = default;
  GeometryMap(SpacePtr s, Eigen::MatrixX2d c) : space(std::move(s)), coeffs(std::move(c)) {}

  MapJet eval(int patch, const Vector2d& mu, int nderiv = 1) const;

  // Jacobian with respect to the parametric coordinate xi (chain rule with the
  // bilinear patch map).
  Matrix2d jacobian_xi(int patch, const Vector2d& mu) const;
};

// Scalar spline field over one component of a space (used by the boundary
// orthogonalisation construction and monitor evaluations).
struct ScalarJet {
  double v = 0.0;
  Vector2d grad = Vector2d::Zero();  // d/dmu
};
ScalarJet eval_scalar(const MultipatchSpace& space, const Eigen::VectorXd& coeffs,
                      int patch, const Vector2d& mu, int nderiv = 1);

// Coefficient prolongation onto a dyadically refined (nested) space; exact.
Eigen::MatrixX2d prolong_coeffs(const MultipatchSpace& coarse, const MultipatchSpace& fine,
                                const Eigen::MatrixX2d& c);

}  // namespace mp
