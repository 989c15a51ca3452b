// Synthetic benchmark geometries: parametric coverings (square, jittered
// rectangle, picture-frame, hexagon) and boundary correspondences (conformal
// image, chevron with a concave corner, sheared square, skew quadrilateral).
#pragma once

#include <functional>

#include "mp/topology.hpp"

namespace mp::samples {

// --- parametric coverings ---------------------------------------------------

Quadrangulation square_1patch();
// Unit square split at xi1 = 0.5.
Quadrangulation square_2patch();
// Unit square, 2x2 patches around a displaced interior vertex (default
// (0.6, 0.6)); the boundary sides are split at their midpoints.
Quadrangulation square_4patch(const Vector2d& interior = {0.6, 0.6});
// [0,3]x[0,2] rectangle, 3x2 patches with jittered interior/side vertices.
Quadrangulation rect_6patch_irregular();
// Unit square: inner square plus four boundary patches, each covering one side.
Quadrangulation square_5patch_frame(double inset = 0.3);
// Diamond through the mid-edge points of the unit square: inner diamond
// (side ratio `scale`) plus four boundary patches. Each boundary patch's
// outer edge wraps one corner of the square under the corner-wrapped
// correspondences below, so patch junctions sit at smooth boundary points.
Quadrangulation diamond_5patch_frame(double scale = 0.6);
// Regular hexagon of radius 1 centred at the origin, covered by three quads.
Quadrangulation hexagon_3patch();

// --- boundary correspondences ----------------------------------------------

// Image of the parametric boundary under an affine map A xi + b.
BoundaryCorrespondence affine_boundary(const Quadrangulation& q, const Matrix2d& A,
                                       const Vector2d& b = Vector2d::Zero());

// Horizontally sheared square: (xi1 + shear*xi2, xi2).
BoundaryCorrespondence sheared_boundary(const Quadrangulation& q, double shear = 0.8);

// Square sheared by the cubic profile (xi1 + shear*xi2^2(3-2*xi2), xi2): the
// sides bend into S-curves but the corners remain right angles. Cubic side
// curves, so liftable into any trace space of degree >= 3.
BoundaryCorrespondence smooth_sheared_boundary(const Quadrangulation& q, double shear = 0.8);

// Smooth-sheared square traced from the diamond covering: each side curve
// runs from one mid-edge point around the enclosed square corner to the next
// mid-edge point, with a triple knot at the corner so the right-angle kink is
// exact. Cubic curves; pair with diamond_5patch_frame.
BoundaryCorrespondence corner_wrapped_sheared_boundary(const Quadrangulation& q,
                                                       double shear = 0.8);

// Boundary of the conformal image w(z) = z + 0.1 z^2 of the unit square.
// Each side is reparameterised by sigma(t) = (exp(beta t) - 1)/(exp(beta) - 1)
// (beta = 0: affine) and interpolated at the Greville points of the side's
// trace knot vector in `space`, so the correspondence is representable in
// every dyadic refinement of `space`. With beta = 0 and degree >= 2 the
// interpolant is the exact conformal boundary; with beta != 0 the exact
// solution leaves the spline space and refinement studies are nontrivial.
BoundaryCorrespondence conformal_boundary(const MultipatchSpace& space, double beta = 0.0);

// Chevron target for the 2-patch square: identity on three sides, the top
// side bent down to a concave corner at (0.5, dent) with dent < 1.
BoundaryCorrespondence chevron_boundary(const Quadrangulation& q, double dent = 0.45);

// Convex but skewed quadrilateral target (bilinear image of the unit square)
// producing strongly heterogeneous cell sizes.
BoundaryCorrespondence skew_quad_boundary(const Quadrangulation& q);

// Interpolate f at the Greville points of an open knot vector on [0,1].
Curve interpolate_curve(int degree, const std::vector<double>& interior_breaks,
                        const std::function<Vector2d(double)>& f);
// Variant taking an explicit knot vector (e.g. with repeated interior knots
// for reduced continuity at a corner).
Curve interpolate_curve(const KnotVector& kv, const std::function<Vector2d(double)>& f);

// Conformal test map w(z) = z + 0.1 z^2 and its Jacobian.
Vector2d conformal_point(const Vector2d& xi);
Matrix2d conformal_jacobian(const Vector2d& xi);

}  // namespace mp::samples
