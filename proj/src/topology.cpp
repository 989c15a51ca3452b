#include "mp/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace mp {

namespace {
// Union-find over local dof keys.
struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};
}  // namespace

Vector2d Quadrangulation::map_point(int p, const Vector2d& mu) const {
  const double u = mu[0], v = mu[1];
  return corner(p, 0) * (1 - u) * (1 - v) + corner(p, 1) * u * (1 - v) +
         corner(p, 2) * u * v + corner(p, 3) * (1 - u) * v;
}

Matrix2d Quadrangulation::map_jacobian(int p, const Vector2d& mu) const {
  const double u = mu[0], v = mu[1];
  const Vector2d du = (corner(p, 1) - corner(p, 0)) * (1 - v) + (corner(p, 2) - corner(p, 3)) * v;
  const Vector2d dv = (corner(p, 3) - corner(p, 0)) * (1 - u) + (corner(p, 2) - corner(p, 1)) * u;
  Matrix2d J;
  J.col(0) = du;
  J.col(1) = dv;
  return J;
}

Vector2d Quadrangulation::map_mixed(int p) const {
  return corner(p, 0) - corner(p, 1) + corner(p, 2) - corner(p, 3);
}

Vector2d Quadrangulation::side_start(int k) const {
  const auto& e = sides[k].front();
  auto [a, b] = edge_corner_slots(e.edge);
  return e.t0 < e.t1 ? corner(e.patch, a) : corner(e.patch, b);
}

Vector2d Quadrangulation::side_end(int k) const {
  const auto& e = sides[k].back();
  auto [a, b] = edge_corner_slots(e.edge);
  return e.t0 < e.t1 ? corner(e.patch, b) : corner(e.patch, a);
}

double Quadrangulation::side_length(int k) const {
  return (side_end(k) - side_start(k)).norm();
}

Frame2 patch_frame(const Quadrangulation& q, int patch, const Vector2d& mu) {
  Frame2 f;
  f.J = q.map_jacobian(patch, mu);
  f.det = f.J.determinant();
  f.Jinv << f.J(1, 1), -f.J(0, 1), -f.J(1, 0), f.J(0, 0);
  f.Jinv /= f.det;
  const Vector2d d = q.map_mixed(patch);
  for (int k = 0; k < 2; ++k) {
    f.T[k] << 0.0, d[k], d[k], 0.0;
  }
  f.curved = d.squaredNorm() > 1e-28;
  return f;
}

Quadrangulation build_topology(const RawTopology& raw) {
  Quadrangulation q;
  q.vertices = raw.vertices;
  q.patches = raw.patches;
  const int nv = static_cast<int>(q.vertices.size());

  // Patch validity: ids in range, distinct, positively oriented bilinear map.
  for (int p = 0; p < q.num_patches(); ++p) {
    for (int s = 0; s < 4; ++s)
      require(q.patches[p][s] >= 0 && q.patches[p][s] < nv, ErrorKind::Schema,
              "patch " + std::to_string(p) + ": vertex id out of range");
    std::set<int> distinct(q.patches[p].begin(), q.patches[p].end());
    require(distinct.size() == 4, ErrorKind::Topology,
            "patch " + std::to_string(p) + ": repeated vertex");
    // det of the bilinear map on a 5x5 grid (includes the four corners).
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        const Vector2d mu(i / 4.0, j / 4.0);
        require(q.map_jacobian(p, mu).determinant() > 0.0, ErrorKind::Geometry,
                "patch " + std::to_string(p) + ": bilinear map not orientation-"
                "preserving (check counterclockwise ordering / convexity)");
      }
  }

  // Edge incidence.
  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> edges;  // (a,b)->(patch,e)
  for (int p = 0; p < q.num_patches(); ++p)
    for (int e = 0; e < 4; ++e) {
      auto [sa, sb] = edge_corner_slots(e);
      int a = q.patches[p][sa], b = q.patches[p][sb];
      edges[{std::min(a, b), std::max(a, b)}].emplace_back(p, e);
    }
  std::set<std::pair<int, int>> boundary_edges;
  for (const auto& [key, inc] : edges) {
    require(inc.size() <= 2, ErrorKind::Topology,
            "nonmanifold edge shared by more than two patches");
    if (inc.size() == 2) {
      const auto [pi, ei] = inc[0];
      const auto [pj, ej] = inc[1];
      auto [ia, ib] = edge_corner_slots(ei);
      auto [ja, jb] = edge_corner_slots(ej);
      const bool flip = q.patches[pi][ia] != q.patches[pj][ja];
      q.interior_facets.push_back({pi, ei, pj, ej, flip});
    } else {
      boundary_edges.insert(key);
    }
  }

  // Euler characteristic of the open complex: V - E + F = 1.
  require(nv - static_cast<int>(edges.size()) + q.num_patches() == 1, ErrorKind::Topology,
          "quadrangulation is not a simply connected disc (Euler check failed)");

  // Boundary sides from vertex chains.
  std::map<std::pair<int, int>, std::pair<int, int>> bedge_owner;  // edge -> (patch,e)
  for (const auto& key : boundary_edges) bedge_owner[key] = edges[key][0];
  std::set<std::pair<int, int>> covered;
  q.sides.resize(raw.sides.size());
  for (int k = 0; k < static_cast<int>(raw.sides.size()); ++k) {
    const auto& chain = raw.sides[k];
    require(chain.size() >= 2, ErrorKind::Schema, "boundary side with fewer than two vertices");
    const Vector2d start = q.vertices[chain.front()];
    const Vector2d dir = q.vertices[chain.back()] - start;
    const double len2 = dir.squaredNorm();
    require(len2 > 0, ErrorKind::Schema, "degenerate boundary side");
    for (int v : chain) {
      const Vector2d d = q.vertices[v] - start;
      require(std::abs(d[0] * dir[1] - d[1] * dir[0]) <= 1e-9 * std::sqrt(len2),
              ErrorKind::Geometry, "boundary side " + std::to_string(k) + " is not straight");
    }
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
      const int a = chain[i], b = chain[i + 1];
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      require(boundary_edges.count(key) > 0, ErrorKind::Topology,
              "boundary side lists an edge that is not on the boundary");
      require(covered.insert(key).second, ErrorKind::Topology,
              "boundary edge listed in more than one side");
      const auto [p, e] = bedge_owner[key];
      auto [sa, sb] = edge_corner_slots(e);
      const auto t_of = [&](int vid) {
        return (q.vertices[vid] - start).dot(dir) / len2;
      };
      q.sides[k].push_back({p, e, k, t_of(q.patches[p][sa]), t_of(q.patches[p][sb])});
    }
  }
  require(covered.size() == boundary_edges.size(), ErrorKind::Topology,
          "boundary sides do not cover the whole boundary");

  // Outer-edge metadata per patch (explicit input wins, else derived when
  // the patch has exactly one boundary edge).
  q.outer_edge.assign(q.num_patches(), -1);
  std::vector<std::vector<int>> patch_bedges(q.num_patches());
  for (const auto& side : q.sides)
    for (const auto& be : side) patch_bedges[be.patch].push_back(be.edge);
  for (int p = 0; p < q.num_patches(); ++p)
    if (patch_bedges[p].size() == 1) q.outer_edge[p] = patch_bedges[p][0];
  for (const auto& [p, e] : raw.outer_edges) {
    require(p >= 0 && p < q.num_patches() && e >= 0 && e < 4, ErrorKind::Schema,
            "outer-edge metadata out of range");
    require(std::count(patch_bedges[p].begin(), patch_bedges[p].end(), e) > 0,
            ErrorKind::Schema, "outer-edge metadata names a non-boundary edge");
    q.outer_edge[p] = e;
  }
  return q;
}

VertexSet shared_vertices(const Quadrangulation& q) {
  std::map<int, std::vector<std::pair<int, int>>> inc;
  for (int p = 0; p < q.num_patches(); ++p)
    for (int s = 0; s < 4; ++s) inc[q.patches[p][s]].emplace_back(p, s);
  VertexSet vs;
  for (const auto& [v, corners] : inc)
    if (corners.size() >= 2) vs.entries.push_back({v, corners, 0.0});
  for (auto& a : vs.entries) {
    double dmin = std::numeric_limits<double>::infinity();
    for (const auto& b : vs.entries)
      if (b.vertex != a.vertex)
        dmin = std::min(dmin, (q.vertices[a.vertex] - q.vertices[b.vertex]).norm());
    a.d_min = dmin;
    require(vs.entries.size() < 2 || a.d_min > 0, ErrorKind::Topology,
            "coincident shared vertices");
  }
  return vs;
}

std::vector<int> MultipatchSpace::edge_local_dofs(int patch, int e) const {
  const int nu = bases[patch].nu(), nv = bases[patch].nv();
  std::vector<int> out;
  switch (e) {
    case 0:
      for (int i = 0; i < nu; ++i) out.push_back(local_index(patch, i, 0));
      break;
    case 1:
      for (int j = 0; j < nv; ++j) out.push_back(local_index(patch, nu - 1, j));
      break;
    case 2:
      for (int i = 0; i < nu; ++i) out.push_back(local_index(patch, i, nv - 1));
      break;
    default:
      for (int j = 0; j < nv; ++j) out.push_back(local_index(patch, 0, j));
  }
  return out;
}

std::vector<int> MultipatchSpace::edge_global_dofs(int patch, int e) const {
  auto loc = edge_local_dofs(patch, e);
  std::vector<int> out(loc.size());
  for (std::size_t i = 0; i < loc.size(); ++i) out[i] = dof_map[patch][loc[i]];
  return out;
}

MultipatchSpace build_space(std::shared_ptr<const Quadrangulation> topo,
                            std::vector<TensorBasis> bases) {
  require(bases.size() == static_cast<std::size_t>(topo->num_patches()), ErrorKind::Input,
          "build_space: one tensor basis per patch required");
  for (auto& b : bases) {
    b.kv_u.validate();
    b.kv_v.validate();
  }
  MultipatchSpace s;
  s.topo = topo;
  s.bases = std::move(bases);

  std::vector<int> offset(topo->num_patches() + 1, 0);
  for (int p = 0; p < topo->num_patches(); ++p)
    offset[p + 1] = offset[p] + s.bases[p].dim();
  UnionFind uf(offset.back());

  for (const auto& f : topo->interior_facets) {
    const KnotVector& ki = s.edge_kv(f.pi, f.ei);
    const KnotVector& kj = s.edge_kv(f.pj, f.ej);
    require(f.flip ? (ki == reversed(kj)) : (ki == kj), ErrorKind::Compatibility,
            "facet between patches " + std::to_string(f.pi) + " and " +
                std::to_string(f.pj) + ": edge knot vectors do not match");
    auto di = s.edge_local_dofs(f.pi, f.ei);
    auto dj = s.edge_local_dofs(f.pj, f.ej);
    for (std::size_t i = 0; i < di.size(); ++i) {
      const std::size_t j = f.flip ? di.size() - 1 - i : i;
      uf.unite(offset[f.pi] + di[i], offset[f.pj] + dj[j]);
    }
  }

  // Deterministic numbering: first encounter in patch-major local-lex order.
  std::vector<int> global(offset.back(), -1);
  int next = 0;
  for (int key = 0; key < offset.back(); ++key) {
    const int root = uf.find(key);
    if (global[root] < 0) global[root] = next++;
    global[key] = global[root];
  }
  s.dim = next;
  s.dof_map.resize(topo->num_patches());
  for (int p = 0; p < topo->num_patches(); ++p) {
    s.dof_map[p].resize(s.bases[p].dim());
    for (int l = 0; l < s.bases[p].dim(); ++l) s.dof_map[p][l] = global[offset[p] + l];
  }

  s.dof_on_boundary.assign(s.dim, 0);
  for (const auto& side : topo->sides)
    for (const auto& be : side)
      for (int g : s.edge_global_dofs(be.patch, be.edge)) s.dof_on_boundary[g] = 1;
  for (int g = 0; g < s.dim; ++g)
    (s.dof_on_boundary[g] ? s.boundary_dofs : s.interior_dofs).push_back(g);
  return s;
}

MultipatchSpace build_uniform_space(std::shared_ptr<const Quadrangulation> topo,
                                    int degree, int spans_per_dir) {
  require(spans_per_dir >= 1, ErrorKind::Input, "build_uniform_space: spans_per_dir >= 1");
  std::vector<double> breaks;
  for (int i = 1; i < spans_per_dir; ++i)
    breaks.push_back(static_cast<double>(i) / spans_per_dir);
  const KnotVector kv = make_open_knot_vector(degree, breaks);
  std::vector<TensorBasis> bases(topo->num_patches(), TensorBasis{kv, kv});
  return build_space(topo, std::move(bases));
}

MultipatchSpace refine_space(const MultipatchSpace& s) {
  std::vector<TensorBasis> bases;
  for (const auto& b : s.bases)
    bases.push_back({refine_dyadic(b.kv_u), refine_dyadic(b.kv_v)});
  return build_space(s.topo, std::move(bases));
}

Vector2d Curve::eval(double t, int deriv) const {
  std::array<std::array<double, 6>, 3> vals;
  const int first = eval_basis_all(kv, t, deriv, vals);
  Vector2d out = Vector2d::Zero();
  for (int j = 0; j <= kv.degree; ++j) out += vals[deriv][j] * points[first + j];
  return out;
}

BoundaryCorrespondence identity_correspondence(const Quadrangulation& q) {
  BoundaryCorrespondence F;
  for (std::size_t k = 0; k < q.sides.size(); ++k) {
    Curve c;
    c.kv = make_open_knot_vector(1, {});
    c.points = {q.side_start(k), q.side_end(k)};
    F.sides.push_back(std::move(c));
  }
  return F;
}

Eigen::MatrixX2d dirichlet_lift(const MultipatchSpace& space, const BoundaryCorrespondence& F) {
  const auto& q = *space.topo;
  require(F.sides.size() == q.sides.size(), ErrorKind::Input,
          "dirichlet_lift: one curve per boundary side required");
  Eigen::MatrixX2d x = Eigen::MatrixX2d::Zero(space.dim, 2);

  for (std::size_t k = 0; k < q.sides.size(); ++k) {
    const Curve& curve = F.sides[k];
    for (const auto& be : q.sides[k]) {
      const KnotVector& kv = space.edge_kv(be.patch, be.edge);
      const auto gdofs = space.edge_global_dofs(be.patch, be.edge);
      const int n = kv.num_basis();
      const auto seg = [&](double u) {  // curve restricted to this edge
        return curve.eval(be.t0 + u * (be.t1 - be.t0));
      };
      // Collocate at Greville abscissae, then verify exactness densely. This
      // reproduces any input curve (including lower-degree ones) that lies in
      // the edge trace space, and refuses silent projection otherwise.
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
      Eigen::MatrixX2d rhs(n, 2);
      const auto grev = kv.greville();
      std::vector<double> vals;
      for (int r = 0; r < n; ++r) {
        const int first = eval_basis(kv, grev[r], 0, vals);
        for (int j = 0; j <= kv.degree; ++j) A(r, first + j) = vals[j];
        rhs.row(r) = seg(grev[r]).transpose();
      }
      const Eigen::MatrixX2d c = A.partialPivLu().solve(rhs);
      for (int t = 0; t <= 50; ++t) {
        const double u = t / 50.0;
        const int first = eval_basis(kv, u, 0, vals);
        Vector2d v = Vector2d::Zero();
        for (int j = 0; j <= kv.degree; ++j) v += vals[j] * c.row(first + j).transpose();
        require((v - seg(u)).norm() <= 1e-10, ErrorKind::Compatibility,
                "dirichlet_lift: boundary curve on side " + std::to_string(k) +
                    " is not representable in the trace space");
      }
      for (int j = 0; j < n; ++j) x.row(gdofs[j]) = c.row(j);
    }
  }
  return x;
}

}  // namespace mp
