// Quadrangulation of the convex parametric domain, bilinear patch maps,
// facet/vertex incidence, and the C0-matched global multipatch spline space.
#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mp/splines.hpp"

namespace mp {

using Eigen::Matrix2d;
using Eigen::Vector2d;

// Local edge convention for a patch [v0,v1,v2,v3] (counterclockwise):
//   e0: v0->v1 at mu2=0 (param mu1), e1: v1->v2 at mu1=1 (param mu2),
//   e2: v3->v2 at mu2=1 (param mu1), e3: v0->v3 at mu1=0 (param mu2).
inline std::pair<int, int> edge_corner_slots(int e) {
  switch (e) {
    case 0: return {0, 1};
    case 1: return {1, 2};
    case 2: return {3, 2};
    default: return {0, 3};
  }
}
inline int edge_param_dir(int e) { return (e == 0 || e == 2) ? 0 : 1; }
// Point on the unit square along local edge e at edge parameter t.
inline Vector2d edge_mu(int e, double t) {
  switch (e) {
    case 0: return {t, 0.0};
    case 1: return {1.0, t};
    case 2: return {t, 1.0};
    default: return {0.0, t};
  }
}
// Unit mu-direction pointing out of the patch across local edge e.
inline Vector2d edge_outward_mu(int e) {
  switch (e) {
    case 0: return {0.0, -1.0};
    case 1: return {1.0, 0.0};
    case 2: return {0.0, 1.0};
    default: return {-1.0, 0.0};
  }
}

struct TensorBasis {
  KnotVector kv_u, kv_v;
  int nu() const { return kv_u.num_basis(); }
  int nv() const { return kv_v.num_basis(); }
  int dim() const { return nu() * nv(); }
};

struct RawTopology {
  std::vector<Vector2d> vertices;
  std::vector<std::array<int, 4>> patches;          // ccw vertex ids
  std::vector<std::vector<int>> sides;              // per side: ordered vertex chain
  std::map<int, int> outer_edges;                   // optional: patch -> local edge
};

struct Quadrangulation {
  std::vector<Vector2d> vertices;
  std::vector<std::array<int, 4>> patches;

  struct InteriorFacet {
    int pi, ei, pj, ej;
    bool flip;  // true if the two edge parameters run in opposite directions
  };
  std::vector<InteriorFacet> interior_facets;

  struct BoundaryEdge {
    int patch, edge;  // local edge on the boundary
    int side;         // owning side index
    double t0, t1;    // side parameters of the edge start/end (t0 > t1 if reversed)
  };
  std::vector<std::vector<BoundaryEdge>> sides;  // grouped per side, in side order
  std::vector<int> outer_edge;  // per patch: boundary local edge, or -1

  int num_patches() const { return static_cast<int>(patches.size()); }
  Vector2d corner(int p, int slot) const { return vertices[patches[p][slot]]; }

  // Bilinear map m^i and its derivatives.
  Vector2d map_point(int p, const Vector2d& mu) const;
  Matrix2d map_jacobian(int p, const Vector2d& mu) const;
  Vector2d map_mixed(int p) const;  // d2 m / dmu1 dmu2 (constant)

  Vector2d side_start(int k) const;
  Vector2d side_end(int k) const;
  double side_length(int k) const;
};

Quadrangulation build_topology(const RawTopology& raw);

// First/second-order data of a coordinate map c(mu); used to transform basis
// derivatives between the patch-local frame and the coordinate frame.
struct Frame2 {
  Matrix2d J;                 // dc/dmu
  Matrix2d Jinv;
  double det = 1.0;
  std::array<Matrix2d, 2> T;  // d2 c_k / dmu dmu
  bool curved = false;        // any T nonzero
};
Frame2 patch_frame(const Quadrangulation& q, int patch, const Vector2d& mu);

struct VertexSet {
  struct Shared {
    int vertex;
    std::vector<std::pair<int, int>> patch_corners;  // (patch, corner slot)
    double d_min;                                    // distance to nearest other shared vertex
  };
  std::vector<Shared> entries;
};
VertexSet shared_vertices(const Quadrangulation& q);

struct MultipatchSpace {
  std::shared_ptr<const Quadrangulation> topo;
  std::vector<TensorBasis> bases;                 // per patch
  std::vector<std::vector<int>> dof_map;          // per patch: local lex (iu + nu*iv) -> global
  std::vector<char> dof_on_boundary;              // per global dof
  std::vector<int> boundary_dofs, interior_dofs;  // I_B, I_I
  int dim = 0;

  int local_index(int patch, int iu, int iv) const {
    return iu + bases[patch].nu() * iv;
  }
  const KnotVector& edge_kv(int patch, int e) const {
    return edge_param_dir(e) == 0 ? bases[patch].kv_u : bases[patch].kv_v;
  }
  // Local dof indices along local edge e, in edge-parameter order.
  std::vector<int> edge_local_dofs(int patch, int e) const;
  // Global dofs along edge e, in edge-parameter order.
  std::vector<int> edge_global_dofs(int patch, int e) const;
};

MultipatchSpace build_space(std::shared_ptr<const Quadrangulation> topo,
                            std::vector<TensorBasis> bases);
// Same degree and uniform spans on every patch/direction.
MultipatchSpace build_uniform_space(std::shared_ptr<const Quadrangulation> topo,
                                    int degree, int spans_per_dir);
MultipatchSpace refine_space(const MultipatchSpace& s);  // dyadic refinement everywhere

// Spline curve in the plane (boundary correspondence side data).
struct Curve {
  KnotVector kv;
  std::vector<Vector2d> points;
  Vector2d eval(double t, int deriv = 0) const;
};

struct BoundaryCorrespondence {
  std::vector<Curve> sides;  // one curve per boundary side L_k, parameterised on [0,1]
};

// Straight-side correspondence reproducing the parametric boundary (F = id).
BoundaryCorrespondence identity_correspondence(const Quadrangulation& q);

// Boundary DOFs set so the trace reproduces F exactly (verified, else
// compatibility error); interior DOFs zero. Result is dim x 2.
Eigen::MatrixX2d dirichlet_lift(const MultipatchSpace& space,
                                const BoundaryCorrespondence& F);

}  // namespace mp
