// Parameterisation quality functionals (Winslow energy, patchwise area
// variance, interface transverse-jump norm, boundary orthogonality defect),
// degeneracy reports, the H1 distance between nested maps, and the
// convergence-rate estimator.
#pragma once

#include <limits>

#include "mp/map.hpp"

namespace mp {

struct QualityReport {
  double winslow = 0.0;          // +inf sentinel when det J <= 0 somewhere
  bool winslow_degenerate = false;
  double area_multipatch = 0.0;  // sum_p int (det d_mu x)^2 dmu
  double interface_jump = 0.0;   // L_Gamma: facet jump of unit transverse derivative
  double boundary_orth = 0.0;    // L_perp: boundary tangent/transverse defect
  double detj_min_xi = 0.0, detj_max_xi = 0.0;  // det d_xi x over quadrature points
  double detj_min_mu = 0.0, detj_max_mu = 0.0;  // det d_mu x over quadrature points
  double detj_vertex_min = 0.0, detj_vertex_max = 0.0;  // adjacent-patch limits
  int negative_point_count = 0;
};

// Computes all quality functionals of `map` with an n-point Gauss rule per
// element and direction (quad_order = 0 -> max degree + 2). When a controlmap
// r is given, the interface-jump integrals and vertex Jacobian limits are
// taken in r-coordinates; otherwise in the parametric xi-coordinates.
QualityReport quality_report(const GeometryMap& map, const GeometryMap* controlmap = nullptr,
                             int quad_order = 0);

// kappa = log2(e1/e2); e2 == 0 returns +inf (exact-recovery sentinel).
double convergence_rate(double e1, double e2);

// sqrt(int ||a-b||^2 + ||d(a-b)/dxi||_F^2 dxi), evaluated by quadrature on the
// finer of the two (nested) spaces. Non-nested spaces are an input error.
double h1_distance(const GeometryMap& a, const GeometryMap& b);

struct BijectivityReport {
  double det_min = std::numeric_limits<double>::infinity();
  double det_max = -std::numeric_limits<double>::infinity();
  int argmin_patch = -1;
  int argmin_elem = -1;
  Vector2d argmin_mu = Vector2d::Zero();
  int negative_count = 0;
};

// Extrema of det(d x / d xi) over a dense per-element Gauss sample; the argmin
// tie-break is lexicographic in (patch, element, point).
BijectivityReport bijectivity_report(const GeometryMap& map, int dense_order);

}  // namespace mp
