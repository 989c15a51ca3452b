// Reparameterisation machinery: controlmaps (auxiliary maps of the parametric
// domain), diffusivity models (interface removal, cell homogenisation,
// monitor-based adaptation, rank-one alignment, boundary layers, vertex
// regularisation), the controlled weak-form solver, the coupled
// map/controlmap solver, boundary orthogonalisation and the orthogonal
// boundary-layer construction.
#pragma once

#include <functional>
#include <map>
#include <memory>

#include "mp/solvers.hpp"

namespace mp {

// --- controlmaps ------------------------------------------------------------

// A map s of the parametric domain onto itself (or a reference target),
// represented in a multipatch spline space. Maps with identity_boundary leave
// the parametric boundary pointwise fixed; boundary-orthogonalised controlmaps
// only map each side onto itself.
struct ControlMap {
  GeometryMap map;
  bool identity_boundary = true;
  enum class Target { polygon, unit_disc };
  Target target = Target::polygon;
  // Per boundary patch: knot vector and coefficients of the tangential
  // boundary reparameterisation q produced by the q-variant orthogonalisation
  // (solved on an internally refined space, so the knots may be finer than the
  // map's edge knots); consumed by the orthogonal boundary-layer builder.
  std::map<int, std::pair<KnotVector, Eigen::VectorXd>> boundary_reparam;
};

// Greville interpolation of the bilinear patch maps; exact, conforming.
ControlMap identity_controlmap(SpacePtr space);

// --- diffusivity models -----------------------------------------------------

// Scalar monitor function of the physical point, with optional analytic
// derivatives (finite-difference fallbacks are used when absent).
struct MonitorField {
  std::function<double(const Vector2d&)> value;
  std::function<Vector2d(const Vector2d&)> gradient;
  std::function<Matrix2d(const Vector2d&)> hessian;
};

// Precomputed vertex-blend data for diffusivity regularisation at extraordinary
// (shared interior) vertices.
struct VertexBlend {
  struct Entry {
    Vector2d centre = Vector2d::Zero();  // coordinate image of the vertex
    double amplitude = 1.0;              // partition-of-unity amplitude
    double d_min = 1.0;                  // nearest-other-vertex distance
    Matrix2d D_bar = Matrix2d::Identity();  // blended vertex value
  };
  std::vector<Entry> entries;
  double kappa = 9.0;
};

// Symmetric positive-definite 2x2 diffusivity field over the patches. The
// coordinate source for position-dependent models is the reference controlmap
// when given, else the bilinear patch maps of `topo`. State-dependent models
// (homogenisation, monitors, rank-one with k != 0) additionally read the value
// and mu-Jacobian of the unknown map.
struct Diffusivity {
  enum class Kind {
    identity,
    interface_removal,
    scalar_monitor,
    homogenisation_sigma,
    homogenisation_omega,
    rank_one,
    boundary_layer,
    vertex_regularised,
  };
  Kind kind = Kind::identity;

  std::shared_ptr<const Quadrangulation> topo;
  std::shared_ptr<const ControlMap> reference;

  bool normalised = true;  // interface removal: unit tangents (trace 2)

  MonitorField monitor;  // adaptation: sigma = 1 / (nu1 m^k + nu2)
  double nu1 = 1.0, nu2 = 0.01;
  bool use_gradient = false;  // monitor m = ||grad f|| instead of m = f

  double k = 1.0;  // exponent (homogenisation, adaptation, rank-one)

  // Rank-one alignment frames, per patch.
  std::vector<Vector2d> v1, v2;
  std::vector<double> a;

  double layer_mu = 30.0, layer_k = 2.0, layer_nu = 0.005;

  std::shared_ptr<const Diffusivity> inner;  // vertex regularisation
  std::shared_ptr<const VertexBlend> blend;
  bool blend_sum = false;  // plain sum of vertex limits instead of the mean
};

// True when the model depends on the unknown map (value or Jacobian).
bool diffusivity_state_dependent(const Diffusivity& D);

// Evaluation of a state-independent model; errors on state-dependent kinds.
Matrix2d eval_diffusivity(const Diffusivity& D, int patch, const Vector2d& mu);

Diffusivity diffusivity_identity();
// Sum of (unit) coordinate tangent outer products; discontinuous across
// facets, which is what drives the interface-removing diffusion.
Diffusivity diffusivity_interface_removal(std::shared_ptr<const Quadrangulation> topo,
                                          std::shared_ptr<const ControlMap> r = nullptr,
                                          bool normalised = true);
// sigma mode: (det d_mu x)^k I (controlmap block); omega mode:
// (det d_mu x)^-k I (map block).
Diffusivity diffusivity_homogenisation(double k, bool omega_mode);
// (2/(a+1)) (det d_mu x)^k (a v1 v1^T + v2 v2^T), frames normalised per patch.
Diffusivity diffusivity_rank_one(std::vector<Vector2d> v1, std::vector<Vector2d> v2,
                                 std::vector<double> a, double k = 0.0);
Diffusivity diffusivity_adaptation(MonitorField f, double nu1, double nu2, double k = 1.0,
                                   bool use_gradient = false);
// (1 - exp(-mu ||c||^2)) ||c||^k (c c^T/||c||^2) + nu I with c the coordinate
// point (centred layers toward the coordinate origin).
Diffusivity diffusivity_boundary_layer(std::shared_ptr<const Quadrangulation> topo,
                                       double mu = 30.0, double k = 2.0, double nu = 0.005,
                                       std::shared_ptr<const ControlMap> r = nullptr);
// Blend the model toward per-vertex constant values near shared interior
// vertices: D = (1 - sum_i g_i) D_inner + sum_i g_i D_bar_i with Gaussian
// bumps g_i forming a partition of unity at the vertices. The inner model must
// be state-independent.
Diffusivity regularise_vertex(Diffusivity inner, double kappa,
                              std::shared_ptr<const Quadrangulation> topo,
                              std::shared_ptr<const ControlMap> r = nullptr,
                              bool sum_variant = false);

// --- solvers ----------------------------------------------------------------

// Linear diffusion controlmap: div_r (D grad_r s) = 0 componentwise, boundary
// trace taken from the reference (identity when null). Warns on stderr when
// the result is degenerate at a quadrature point.
ControlMap solve_control_diffusion(SpacePtr space, const Diffusivity& D,
                                   const ControlMap* reference = nullptr,
                                   const SolverConfig& cfg = {});

// Regularised weak-form solve for the map x under a fixed controlmap s and
// map diffusivity Dx; boundary dofs are kept at the values of `initial`.
GeometryMap solve_weak_form_controlled(const GeometryMap& initial, const ControlMap& s,
                                       const Diffusivity& Dx, const SolverConfig& cfg = {},
                                       SolveReport* report = nullptr);

// Coupled solve for (x, s): the controlled weak form for x and the diffusion
// equation for s, both over the reference coordinates. Initialised and
// boundary-fixed at (x_ref, r). With Ds = Dx = I and s = r the system is
// equivalent to the plain regularised weak form.
std::pair<GeometryMap, ControlMap> solve_coupled(const GeometryMap& x_ref,
                                                 const ControlMap& r, const Diffusivity& Dx,
                                                 const Diffusivity& Ds,
                                                 const SolverConfig& cfg = {},
                                                 SolveReport* report = nullptr);

// Recompute the map under a controlmap: Dirichlet data is the boundary trace
// of x_ref composed with s (an exact reuse when s fixes the boundary, else a
// boundary L2 projection), interior warm-started from x_ref, then the
// controlled weak form is solved.
GeometryMap reparameterise_map(const GeometryMap& x_ref, const ControlMap& s,
                               const Diffusivity& Dx = {}, const SolverConfig& cfg = {},
                               SolveReport* report = nullptr);

// --- boundary orthogonalisation ---------------------------------------------

enum class OrthVariant { q, t };

// Controlmap enforcing boundary-orthogonal isolines: per boundary patch, a
// harmonic tangential coordinate (Dirichlet on three edges, natural on the
// outer edge) yields a monotone boundary reparameterisation q. The q variant
// composes q through the whole patch and Coons-fills interior patches; the t
// variant (degree >= 3) blends to the identity at the inner edge and leaves
// interior patches untouched.
// When a reference controlmap is supplied, x_ref is understood as inversely
// harmonic into its image and the orthogonalising transformation is composed
// with it, so the result reparameterises the reference coordinates.
ControlMap boundary_orth_controlmap(const GeometryMap& x_ref, OrthVariant variant,
                                    const SolverConfig& cfg = {},
                                    const ControlMap* reference = nullptr);

// Bilinearly blended Coons patch from four boundary curves (edges in local
// edge order and orientation); exact spline coefficients over `tb`, whose
// knot vectors must match the curves'.
Eigen::MatrixX2d coons_patch(const std::array<Curve, 4>& edges, const TensorBasis& tb);

// Normalised transverse layer profile slope at the boundary: d/(exp(d) - 1).
double layer_slope(double d);

// Length-weighted mean over the parametric boundary of the transverse
// derivative magnitude ||d_mu x . n_mu|| of the map.
double mean_boundary_speed(const GeometryMap& x);

// Graded transverse boundary layer on top of a q-variant orthogonalised
// controlmap: fits a continuous boundary grading d so the first-cell thickness
// of x_s matches k_target, composes the exponential profile through the
// boundary patches and projects back into the controlmap space.
ControlMap boundary_layer_orthogonal(const GeometryMap& x_s, const ControlMap& s_orth,
                                     double k_target, const SolverConfig& cfg = {});

// --- projection helpers -----------------------------------------------------

// Global L2(parametric) projection of a patchwise-defined function.
GeometryMap l2_project_map(SpacePtr space, const std::function<Vector2d(int, const Vector2d&)>& f,
                           int quad_order = 0);

// L2 projection of side data onto the boundary trace; overwrites the boundary
// dof rows of `coeffs`. The function receives a boundary edge and its edge
// parameter.
void project_boundary_trace(const MultipatchSpace& space,
                            const std::function<Vector2d(const Quadrangulation::BoundaryEdge&,
                                                         double)>& g,
                            Eigen::MatrixX2d& coeffs);

}  // namespace mp
