#include "mp/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "mp/assembly.hpp"

namespace mp {

namespace {

int default_order(const GeometryMap& m) {
  int p = 1;
  for (const auto& tb : m.space->bases)
    p = std::max({p, tb.kv_u.degree, tb.kv_v.degree});
  return p + 2;
}

// Sorted, deduplicated union of breakpoint lists.
std::vector<double> merge_breaks(std::vector<double> all) {
  std::sort(all.begin(), all.end());
  std::vector<double> out;
  for (double t : all)
    if (out.empty() || t - out.back() > kKnotTol) out.push_back(t);
  return out;
}

Vector2d unit_or_zero(const Vector2d& v) {
  const double n = v.norm();
  return n > 1e-14 ? Vector2d(v / n) : Vector2d::Zero();
}

// Jacobian of the coordinate map at (patch, mu): controlmap jet when present,
// bilinear patch jacobian otherwise.
Matrix2d coord_jacobian(const GeometryMap& map, const GeometryMap* ctrl, int patch,
                        const Vector2d& mu) {
  if (ctrl) return ctrl->eval(patch, mu).Jmu;
  return map.space->topo->map_jacobian(patch, mu);
}

}  // namespace

QualityReport quality_report(const GeometryMap& map, const GeometryMap* controlmap,
                             int quad_order) {
  const MultipatchSpace& space = *map.space;
  const Quadrangulation& topo = *space.topo;
  const Quad1D& g = gauss_legendre(quad_order > 0 ? quad_order : default_order(map));
  QualityReport r;
  r.detj_min_xi = r.detj_min_mu = std::numeric_limits<double>::infinity();
  r.detj_max_xi = r.detj_max_mu = -std::numeric_limits<double>::infinity();

  // Volume functionals: Winslow (in xi), Area (patchwise in mu), det extrema.
  for (int p = 0; p < topo.num_patches(); ++p) {
    const auto bu = space.bases[p].kv_u.breakpoints();
    const auto bv = space.bases[p].kv_v.breakpoints();
    for (std::size_t ev = 0; ev + 1 < bv.size(); ++ev)
      for (std::size_t eu = 0; eu + 1 < bu.size(); ++eu) {
        const double hu = bu[eu + 1] - bu[eu], hv = bv[ev + 1] - bv[ev];
        for (std::size_t jq = 0; jq < g.x.size(); ++jq)
          for (std::size_t iq = 0; iq < g.x.size(); ++iq) {
            const Vector2d mu(bu[eu] + g.x[iq] * hu, bv[ev] + g.x[jq] * hv);
            const double wmu = g.w[iq] * g.w[jq] * hu * hv;
            const MapJet jet = map.eval(p, mu);
            const Frame2 fr = patch_frame(topo, p, mu);
            const Matrix2d Jxi = jet.Jmu * fr.Jinv;
            const double det_xi = Jxi.determinant();
            const double det_mu = jet.Jmu.determinant();
            r.detj_min_xi = std::min(r.detj_min_xi, det_xi);
            r.detj_max_xi = std::max(r.detj_max_xi, det_xi);
            r.detj_min_mu = std::min(r.detj_min_mu, det_mu);
            r.detj_max_mu = std::max(r.detj_max_mu, det_mu);
            if (det_xi <= 0.0) {
              ++r.negative_point_count;
              r.winslow_degenerate = true;
            } else {
              r.winslow += wmu * std::abs(fr.det) * Jxi.squaredNorm() / det_xi;
            }
            r.area_multipatch += wmu * det_mu * det_mu;
          }
      }
  }
  if (r.winslow_degenerate) r.winslow = std::numeric_limits<double>::infinity();

  // Interface jump L_Gamma: squared jump of the unit transverse derivative of
  // x with respect to the coordinate map, integrated over the facet images.
  for (const auto& facet : topo.interior_facets) {
    std::vector<double> all;
    for (double t : space.edge_kv(facet.pi, facet.ei).breakpoints()) all.push_back(t);
    for (double t : space.edge_kv(facet.pj, facet.ej).breakpoints())
      all.push_back(facet.flip ? 1.0 - t : t);
    if (controlmap) {
      const MultipatchSpace& cs = *controlmap->space;
      for (double t : cs.edge_kv(facet.pi, facet.ei).breakpoints()) all.push_back(t);
      for (double t : cs.edge_kv(facet.pj, facet.ej).breakpoints())
        all.push_back(facet.flip ? 1.0 - t : t);
    }
    const std::vector<double> breaks = merge_breaks(std::move(all));
    const Vector2d tan_i_mu = edge_mu(facet.ei, 1.0) - edge_mu(facet.ei, 0.0);
    // Local transverse directions, oriented consistently from side i to j.
    const Vector2d w_i = edge_outward_mu(facet.ei);
    const Vector2d w_j = -edge_outward_mu(facet.ej);
    for (std::size_t e = 0; e + 1 < breaks.size(); ++e) {
      const double h = breaks[e + 1] - breaks[e];
      for (std::size_t q = 0; q < g.x.size(); ++q) {
        const double t = breaks[e] + g.x[q] * h;
        const double tj = facet.flip ? 1.0 - t : t;
        const Vector2d mu_i = edge_mu(facet.ei, t);
        const Vector2d mu_j = edge_mu(facet.ej, tj);
        // Facet arc-length measure in the coordinate frame (side i).
        const Matrix2d Ri = coord_jacobian(map, controlmap, facet.pi, mu_i);
        const double speed = (Ri * tan_i_mu).norm();
        const Vector2d jump =
            unit_or_zero(map.eval(facet.pi, mu_i).Jmu * w_i) -
            unit_or_zero(map.eval(facet.pj, mu_j).Jmu * w_j);
        r.interface_jump += g.w[q] * h * speed * jump.squaredNorm();
      }
    }
  }
  r.interface_jump = std::sqrt(r.interface_jump);

  // Boundary orthogonality defect L_perp over boundary patches.
  for (int p = 0; p < topo.num_patches(); ++p) {
    const int e = topo.outer_edge[p];
    if (e < 0) continue;
    const int dir_t = edge_param_dir(e), dir_n = 1 - dir_t;
    const Vector2d tan_mu = edge_mu(e, 1.0) - edge_mu(e, 0.0);
    const auto breaks = space.edge_kv(p, e).breakpoints();
    for (std::size_t el = 0; el + 1 < breaks.size(); ++el) {
      const double h = breaks[el + 1] - breaks[el];
      for (std::size_t q = 0; q < g.x.size(); ++q) {
        const Vector2d mu = edge_mu(e, breaks[el] + g.x[q] * h);
        const MapJet jet = map.eval(p, mu);
        const Vector2d tv = unit_or_zero(jet.Jmu.col(dir_t));
        const Vector2d nv = unit_or_zero(jet.Jmu.col(dir_n));
        const double arc = (topo.map_jacobian(p, mu) * tan_mu).norm();
        const double d = tv.dot(nv);
        r.boundary_orth += g.w[q] * h * arc * d * d;
      }
    }
  }
  r.boundary_orth = std::sqrt(r.boundary_orth);

  // Vertex Jacobian limits: det of the map in coordinate frame, evaluated a
  // parametric offset 1e-10 inside every adjacent patch corner.
  r.detj_vertex_min = std::numeric_limits<double>::infinity();
  r.detj_vertex_max = -std::numeric_limits<double>::infinity();
  bool any_vertex = false;
  const VertexSet verts = shared_vertices(topo);
  for (const auto& sv : verts.entries)
    for (const auto& [p, slot] : sv.patch_corners) {
      static const Vector2d corners[4] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
      Vector2d mu = corners[slot];
      for (int d = 0; d < 2; ++d) mu[d] = mu[d] == 0.0 ? 1e-10 : 1.0 - 1e-10;
      const Matrix2d R = coord_jacobian(map, controlmap, p, mu);
      const double det = map.eval(p, mu).Jmu.determinant() / R.determinant();
      r.detj_vertex_min = std::min(r.detj_vertex_min, det);
      r.detj_vertex_max = std::max(r.detj_vertex_max, det);
      any_vertex = true;
    }
  if (!any_vertex) r.detj_vertex_min = r.detj_vertex_max = 0.0;
  return r;
}

double convergence_rate(double e1, double e2) {
  require(e2 >= 0.0 && e1 >= 0.0, ErrorKind::Input, "convergence_rate: negative error");
  if (e2 == 0.0) return std::numeric_limits<double>::infinity();
  return std::log2(e1 / e2);
}

namespace {

double h1_norm_of_difference(const GeometryMap& fine_a, const Eigen::MatrixX2d& coeffs_b) {
  const MultipatchSpace& space = *fine_a.space;
  const Quadrangulation& topo = *space.topo;
  GeometryMap diff(fine_a.space, fine_a.coeffs - coeffs_b);
  const Quad1D& g = gauss_legendre(default_order(fine_a));
  double acc = 0.0;
  for (int p = 0; p < topo.num_patches(); ++p) {
    const auto bu = space.bases[p].kv_u.breakpoints();
    const auto bv = space.bases[p].kv_v.breakpoints();
    for (std::size_t ev = 0; ev + 1 < bv.size(); ++ev)
      for (std::size_t eu = 0; eu + 1 < bu.size(); ++eu) {
        const double hu = bu[eu + 1] - bu[eu], hv = bv[ev + 1] - bv[ev];
        for (std::size_t jq = 0; jq < g.x.size(); ++jq)
          for (std::size_t iq = 0; iq < g.x.size(); ++iq) {
            const Vector2d mu(bu[eu] + g.x[iq] * hu, bv[ev] + g.x[jq] * hv);
            const double wmu = g.w[iq] * g.w[jq] * hu * hv;
            const MapJet jet = diff.eval(p, mu);
            const Frame2 fr = patch_frame(topo, p, mu);
            const Matrix2d Jxi = jet.Jmu * fr.Jinv;
            acc += wmu * std::abs(fr.det) * (jet.x.squaredNorm() + Jxi.squaredNorm());
          }
      }
  }
  return std::sqrt(acc);
}

bool same_space(const MultipatchSpace& a, const MultipatchSpace& b) {
  if (a.dim != b.dim || a.bases.size() != b.bases.size()) return false;
  for (std::size_t p = 0; p < a.bases.size(); ++p)
    if (!(a.bases[p].kv_u == b.bases[p].kv_u) || !(a.bases[p].kv_v == b.bases[p].kv_v))
      return false;
  return true;
}

}  // namespace

double h1_distance(const GeometryMap& a, const GeometryMap& b) {
  require(a.space && b.space, ErrorKind::Input, "h1_distance: empty map");
  require(a.space->topo == b.space->topo || same_space(*a.space, *b.space) ||
              a.space->topo->num_patches() == b.space->topo->num_patches(),
          ErrorKind::Input, "h1_distance: maps over different quadrangulations");
  if (same_space(*a.space, *b.space)) return h1_norm_of_difference(a, b.coeffs);
  // Prolong the coarser map onto the finer space.
  try {
    const Eigen::MatrixX2d pa = prolong_coeffs(*a.space, *b.space, a.coeffs);
    return h1_norm_of_difference(b, pa);
  } catch (const Error&) {
  }
  try {
    const Eigen::MatrixX2d pb = prolong_coeffs(*b.space, *a.space, b.coeffs);
    return h1_norm_of_difference(a, pb);
  } catch (const Error&) {
  }
  fail(ErrorKind::Input, "h1_distance: spaces are not nested");
}

BijectivityReport bijectivity_report(const GeometryMap& map, int dense_order) {
  require(dense_order >= 1, ErrorKind::Input, "bijectivity_report: order must be >= 1");
  const MultipatchSpace& space = *map.space;
  const Quadrangulation& topo = *space.topo;
  const Quad1D& g = gauss_legendre(dense_order);
  BijectivityReport r;
  for (int p = 0; p < topo.num_patches(); ++p) {
    const auto bu = space.bases[p].kv_u.breakpoints();
    const auto bv = space.bases[p].kv_v.breakpoints();
    int elem = 0;
    for (std::size_t ev = 0; ev + 1 < bv.size(); ++ev)
      for (std::size_t eu = 0; eu + 1 < bu.size(); ++eu, ++elem) {
        const double hu = bu[eu + 1] - bu[eu], hv = bv[ev + 1] - bv[ev];
        for (std::size_t jq = 0; jq < g.x.size(); ++jq)
          for (std::size_t iq = 0; iq < g.x.size(); ++iq) {
            const Vector2d mu(bu[eu] + g.x[iq] * hu, bv[ev] + g.x[jq] * hv);
            const Frame2 fr = patch_frame(topo, p, mu);
            const double det = (map.eval(p, mu).Jmu * fr.Jinv).determinant();
            if (det < r.det_min) {
              r.det_min = det;
              r.argmin_patch = p;
              r.argmin_elem = elem;
              r.argmin_mu = mu;
            }
            r.det_max = std::max(r.det_max, det);
            if (det <= 0.0) ++r.negative_count;
          }
      }
  }
  return r;
}

}  // namespace mp
